"""Command-line front end: solve, simulate, and sweep pipelines.

Every command reads one JSON problem declaration (see
:mod:`reflband.config`), writes machine-readable results into the
output directory, and prints a one-line human summary.  Exit codes are
a stable contract: 0 on success, 2 for input/configuration errors, 3
for numerical failures (solver breakdown, HJB certificate failure,
path blow-ups, violated monotonicity assertions).  Given the same
configuration and seed, every output file is byte-identical across
runs.
"""

import argparse
import os
import sys

from .boundary import build_value, value_to_csv, verify_hjb
from .config import load_config, ou_params_for, resolve_basis
from .errors import InputError, ModelError, ReflbandError
from .jsonio import dumps_17g
from .montecarlo import (
    dump_paths_csv,
    estimate_case_c_value,
    estimate_payoff,
    simulate_double_reflection,
)
from .ou import sensitivity_sweep
from .reward import classify

__all__ = ["main", "build_parser", "cmd_solve", "cmd_simulate", "cmd_sweep"]


def build_parser():
    """The argument parser for the ``reflband`` entry point."""
    parser = argparse.ArgumentParser(
        prog="reflband",
        description="Barrier policies for dividend-style singular control "
        "of diffusions reflected at zero",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, metavar="PATH",
                       help="JSON problem declaration")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="output directory (default: current directory)")
        p.add_argument("--seed", type=int, default=None, metavar="N",
                       help="override the configured simulation seed")
        p.add_argument("--grid-hi", type=float, default=None, metavar="X",
                       help="extend the working grid at least to this level")

    p_solve = sub.add_parser(
        "solve", help="solve the free boundary and verify the HJB certificate"
    )
    common(p_solve)
    p_sim = sub.add_parser(
        "simulate", help="Monte Carlo estimate of a barrier policy's payoff"
    )
    common(p_sim)
    p_sim.add_argument("--policy-b", type=float, default=None, metavar="X",
                       help="barrier level (default: the solved optimum)")
    p_sweep = sub.add_parser(
        "sweep", help="re-solve along one parameter axis and check monotonicity"
    )
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, metavar="NAME",
                         choices=("sigma", "theta", "kappa", "eta0"),
                         help="swept parameter: sigma, theta, kappa or eta0")
    p_sweep.add_argument("--values", required=True, metavar="LIST",
                         help="comma-separated increasing parameter values")
    return parser


def _solve_pipeline(config):
    basis, method = resolve_basis(config)
    case = classify(config.spec, config.reward, config.grid)
    solution = build_value(basis, config.spec, config.reward, case)
    return basis, method, case, solution


def _write(out_dir, name, text):
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def cmd_solve(config, out_dir):
    """Solve, verify, and write ``solution.json`` plus the value CSV.

    Returns 0 when the HJB certificate passes, 3 otherwise.
    """
    basis, method, case, solution = _solve_pipeline(config)
    report = verify_hjb(solution, basis, config.spec, config.reward, config.grid)
    record = {
        "case": case.variant,
        "x_bar": case.x_bar,
        "regime": solution.regime,
        "b_star": solution.b_star,
        "alpha": solution.alpha,
        "beta": solution.beta,
        "v_at_bstar": solution.v_at_bstar,
        "basis_method": method,
        "hjb": {
            "passed": report.passed,
            "max_pde_violation": report.max_pde_violation,
            "max_gradient_violation": report.max_gradient_violation,
            "neumann_residual": report.neumann_residual,
            "tol": report.tol,
            "equality_regions": [
                {"branch": br, "lo": lo, "hi": hi, "residual": res}
                for br, lo, hi, res in report.equality_regions
            ],
        },
    }
    _write(out_dir, config.output.solution_json, dumps_17g(record))
    xs = config.grid.points[config.grid.points >= 0.0]
    value_to_csv(
        solution, xs, os.path.join(out_dir, config.output.value_csv),
        spec=config.spec, reward=config.reward,
    )
    b_text = "-" if solution.b_star is None else f"{solution.b_star:.6g}"
    verdict = "pass" if report.passed else "FAIL"
    print(f"case {case.variant}  regime {solution.regime}  b_star {b_text}  "
          f"hjb {verdict}")
    return 0 if report.passed else 3


def cmd_simulate(config, out_dir, policy_b=None):
    """Estimate the policy payoff from ``config.x0`` and write the JSON.

    The barrier defaults to the solved optimum; in the never-act regime
    the estimate is the pure reflection cost and ``policy_b`` is
    ignored.
    """
    basis, method, case, solution = _solve_pipeline(config)
    x0 = config.x0
    if solution.regime == "NoAction":
        b_used = None
        est = estimate_case_c_value(config.spec, config.reward, x0, config.sim)
    else:
        if policy_b is not None:
            b_used = float(policy_b)
        elif solution.regime == "ReflectAtBand":
            b_used = solution.b_star
        else:
            raise InputError(
                "the optimal policy squeezes at zero (b* = 0), which the "
                "time-stepping scheme cannot represent; pass --policy-b "
                "with a small positive barrier to simulate an approximation"
            )
        est = estimate_payoff(config.spec, config.reward, b_used, x0, config.sim)
    record = {
        "mean": est.mean,
        "std_error": est.std_error,
        "n_paths": est.n_paths,
        "tail_bound": est.tail_bound,
        "x0": x0,
        "policy_b": b_used,
        "regime": solution.regime,
        "analytic_value": float(solution.value(x0)),
        "details": est.details,
    }
    _write(out_dir, config.output.estimate_json, dumps_17g(record))
    if config.output.paths_csv is not None and solution.regime != "NoAction":
        band = simulate_double_reflection(
            config.spec, config.reward, b_used, x0, config.sim,
            n_record=config.output.n_record,
        )
        dump_paths_csv(band, os.path.join(out_dir, config.output.paths_csv))
    print(f"estimate {est.mean:.6g} +/- {est.std_error:.2g} "
          f"(n={est.n_paths}, tail<{est.tail_bound:.2g})")
    return 0


def _parse_values(text):
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise InputError("--values must list at least one number")
    values = []
    for s in items:
        try:
            values.append(float(s))
        except ValueError:
            raise InputError(f"--values entry {s!r} is not a number") from None
    return values


def cmd_sweep(config, out_dir, parameter, values):
    """Sweep one parameter, write the CSV, and print verdict lines.

    Returns 0 when every row solved and all asserted monotonicity
    verdicts hold, 3 otherwise.
    """
    p = ou_params_for(config)
    if p is None:
        raise InputError(
            "sweep requires a mean-reverting diffusion with constant "
            "marginal reward and kappa > eta0"
        )
    grid = config.grid if config.grid_explicit else None
    result = sensitivity_sweep(p, parameter, values, grid=grid)
    result.to_csv(os.path.join(out_dir, config.output.sweep_csv))
    for name in sorted(result.verdicts):
        value = result.verdicts[name]
        label = name.replace("b_star", "b*").replace("_", " ")
        if isinstance(value, bool):
            status = "pass" if value else "FAIL"
            note = "" if name in result.asserted else " (observed)"
            print(f"{label}: {status}{note}")
        else:
            print(f"{label}: {value}")
    failed_rows = [row for row in result.rows if row.error is not None]
    for row in failed_rows:
        print(f"error at {parameter}={row.value:g}: {row.error}", file=sys.stderr)
    if failed_rows:
        return 3
    return 0 if result.all_asserted_hold else 3


def main(argv=None):
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, grid_hi=args.grid_hi, seed=args.seed)
        out_dir = args.out if args.out is not None else "."
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "solve":
            return cmd_solve(config, out_dir)
        if args.command == "simulate":
            return cmd_simulate(config, out_dir, policy_b=args.policy_b)
        return cmd_sweep(config, out_dir, args.param, _parse_values(args.values))
    except (InputError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ReflbandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
