"""Problem configuration files: a versioned JSON schema for experiments.

A configuration names a diffusion, a marginal-reward family, and
optional grid / simulation / output settings.  Parsing is strict:
unknown fields, wrong types, and out-of-range values are rejected with
messages that name the offending field, and ``kappa >= eta(0)`` is
enforced at load (a cheaper reflection than the best dividend rate
makes the value infinite).

Schema (version 1)::

    {
      "schema_version": 1,
      "diffusion": {"kind": "ou", "mu": 0.1, "theta": 1.0, "sigma": 0.894},
      "reward":    {"kind": "constant", "eta0": 0.5, "kappa": 1.0, "r": 0.05},
      "grid":      {"x_lo": 0.0, "x_hi": 6.0, "n": 12801},        # optional
      "sim":       {"dt": 1e-3, "n_paths": 100000, "rng_seed": 7}, # optional
      "output":    {"paths_csv": "paths.csv", "n_record": 4},      # optional
      "basis":     "auto",                                         # optional
      "x0": 0.0                                                    # optional
    }

Diffusion kinds: ``brownian`` (mu, sigma) and ``ou`` (mu, theta,
sigma).  Reward kinds: ``constant`` (eta0), ``linear`` (slope,
intercept), ``exp-decay`` (eta0, lam), and ``running-linear``
(pi_slope, pi_intercept, alpha), the last converting a running profit
rate pi(x) plus interest spread alpha into a marginal reward through
the resolvent.  Every reward carries ``kappa`` and ``r``.  ``basis``
selects the fundamental-solution construction: ``ode`` (generic
shooting), ``cylinder`` (closed form, mean-reverting constant-reward
problems only), or ``auto`` (cylinder when eligible, else ode).
"""

import json
import math

from dataclasses import dataclass

import numpy as np

from .basis import compute_basis
from .diffusion import Grid, brownian, ou
from .errors import InputError, ModelError
from .montecarlo import SimConfig
from .ou import OUParams, ou_hat_basis
from .reward import (
    constant_reward,
    exp_decay_reward,
    from_running_reward,
    linear_reward,
)

__all__ = [
    "SCHEMA_VERSION",
    "OutputSpec",
    "ProblemConfig",
    "load_config",
    "ou_params_for",
    "resolve_basis",
]

SCHEMA_VERSION = 1

_DIFFUSION_KINDS = ("brownian", "ou")
_REWARD_KINDS = ("constant", "linear", "exp-decay", "running-linear")
_BASIS_METHODS = ("auto", "ode", "cylinder")

_MISSING = object()


@dataclass(frozen=True)
class OutputSpec:
    """File names (relative to the output directory) for command results."""

    solution_json: str = "solution.json"
    value_csv: str = "value.csv"
    estimate_json: str = "estimate.json"
    sweep_csv: str = "sweep.csv"
    paths_csv: str = None
    n_record: int = 4


@dataclass(frozen=True)
class ProblemConfig:
    """A fully validated problem declaration.

    Attributes
    ----------
    spec : DiffusionSpec
        The state dynamics.
    reward : RewardSpec
        Marginal dividend reward, reflection cost ``kappa``, rate ``r``.
    grid : Grid
        Working grid for basis construction and verification.
    grid_explicit : bool
        True when the file pinned the grid (as opposed to the default
        sized from the diffusion scale); explicit grids are forwarded
        to sweeps, default ones are rebuilt per swept value.
    sim : SimConfig
        Monte Carlo settings.
    output : OutputSpec
        Output file names.
    basis_method : str
        One of ``auto`` / ``ode`` / ``cylinder``.
    x0 : float
        Start state for simulation commands.
    """

    spec: object
    reward: object
    grid: Grid
    grid_explicit: bool
    sim: SimConfig
    output: OutputSpec
    basis_method: str = "auto"
    x0: float = 0.0


def _as_table(value, ctx):
    if not isinstance(value, dict):
        raise InputError(f"field '{ctx}' must be a JSON object")
    return dict(value)


def _take(table, key, ctx, default=_MISSING):
    if key in table:
        return table.pop(key)
    if default is _MISSING:
        raise InputError(f"missing field '{ctx}.{key}'")
    return default


def _reject_unknown(table, ctx):
    if table:
        name = sorted(table)[0]
        raise InputError(f"unknown field '{ctx}.{name}'")


def _number(value, key, ctx):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"field '{ctx}.{key}' must be a number, got {value!r}")
    x = float(value)
    if not math.isfinite(x):
        raise InputError(f"field '{ctx}.{key}' must be finite")
    return x

def _integer(value, key, ctx):
    if isinstance(value, bool) or not isinstance(value, int):
        raise InputError(f"field '{ctx}.{key}' must be an integer, got {value!r}")
    return int(value)


def _boolean(value, key, ctx):
    if not isinstance(value, bool):
        raise InputError(f"field '{ctx}.{key}' must be true or false, got {value!r}")
    return value


def _string(value, key, ctx):
    if not isinstance(value, str):
        raise InputError(f"field '{ctx}.{key}' must be a string, got {value!r}")
    return value


def _build_diffusion(table):
    kind = _string(_take(table, "kind", "diffusion"), "kind", "diffusion")
    if kind == "brownian":
        mu = _number(_take(table, "mu", "diffusion", 0.0), "mu", "diffusion")
        sigma = _number(_take(table, "sigma", "diffusion"), "sigma", "diffusion")
        _reject_unknown(table, "diffusion")
        if sigma <= 0:
            raise InputError(f"field 'diffusion.sigma' must be positive, got {sigma}")
        return brownian(mu=mu, sigma=sigma)
    if kind == "ou":
        mu = _number(_take(table, "mu", "diffusion", 0.0), "mu", "diffusion")
        theta = _number(_take(table, "theta", "diffusion"), "theta", "diffusion")
        sigma = _number(_take(table, "sigma", "diffusion"), "sigma", "diffusion")
        _reject_unknown(table, "diffusion")
        if theta <= 0:
            raise InputError(f"field 'diffusion.theta' must be positive, got {theta}")
        if sigma <= 0:
            raise InputError(f"field 'diffusion.sigma' must be positive, got {sigma}")
        return ou(mu=mu, theta=theta, sigma=sigma)
    raise InputError(
        f"unknown diffusion kind {kind!r}; expected one of {_DIFFUSION_KINDS}"
    )


def _build_reward(table, spec, grid):
    kind = _string(_take(table, "kind", "reward"), "kind", "reward")
    if kind not in _REWARD_KINDS:
        raise InputError(
            f"unknown reward kind {kind!r}; expected one of {_REWARD_KINDS}"
        )
    kappa = _number(_take(table, "kappa", "reward"), "kappa", "reward")
    r = _number(_take(table, "r", "reward"), "r", "reward")
    if r <= 0:
        raise InputError(f"field 'reward.r' must be positive, got {r}")
    if kind == "constant":
        eta0 = _number(_take(table, "eta0", "reward"), "eta0", "reward")
        _reject_unknown(table, "reward")
        reward = constant_reward(eta0, kappa, r)
    elif kind == "linear":
        slope = _number(_take(table, "slope", "reward"), "slope", "reward")
        intercept = _number(_take(table, "intercept", "reward"), "intercept", "reward")
        _reject_unknown(table, "reward")
        reward = linear_reward(slope, intercept, kappa, r)
    elif kind == "exp-decay":
        eta0 = _number(_take(table, "eta0", "reward"), "eta0", "reward")
        lam = _number(_take(table, "lam", "reward"), "lam", "reward")
        _reject_unknown(table, "reward")
        reward = exp_decay_reward(eta0, lam, kappa, r)
    else:
        p_slope = _number(_take(table, "pi_slope", "reward"), "pi_slope", "reward")
        p_icept = _number(
            _take(table, "pi_intercept", "reward"), "pi_intercept", "reward"
        )
        alpha = _number(_take(table, "alpha", "reward"), "alpha", "reward")
        _reject_unknown(table, "reward")

        def pi(x, c=p_icept, s=p_slope):
            return c + s * np.asarray(x, dtype=float)

        def pi_prime(x, s=p_slope):
            return np.full_like(np.asarray(x, dtype=float), s)

        reward = from_running_reward(spec, pi, alpha, r, grid, pi_prime=pi_prime)
    eta0_val = float(reward.eta(0.0))
    if reward.kappa < eta0_val * (1.0 - 1e-12) - 1e-12:
        raise ModelError(
            f"reward.kappa = {reward.kappa} is below eta(0) = {eta0_val}; "
            "reflecting would be cheaper than the best dividend rate and "
            "the value is infinite"
        )
    return reward


def _build_grid(table, spec, r, grid_hi):
    if table is None:
        return Grid.default_for(spec, r, x_hi_min=grid_hi), False
    table = _as_table(table, "grid")
    x_lo = _number(_take(table, "x_lo", "grid", 0.0), "x_lo", "grid")
    x_hi = _number(_take(table, "x_hi", "grid"), "x_hi", "grid")
    n = _integer(_take(table, "n", "grid", 12801), "n", "grid")
    _reject_unknown(table, "grid")
    if grid_hi is not None:
        x_hi = max(x_hi, float(grid_hi))
    if n < 11:
        raise InputError(f"field 'grid.n' must be at least 11, got {n}")
    if not x_lo <= 0.0 < x_hi:
        raise InputError(
            f"grid must contain 0: need x_lo <= 0 < x_hi, got [{x_lo}, {x_hi}]"
        )
    return Grid.uniform(x_lo, x_hi, n), True


def _build_sim(table, seed):
    kwargs = {}
    if table is not None:
        table = _as_table(table, "sim")
        for key in ("dt", "horizon_T", "tail_tol"):
            if key in table:
                kwargs[key] = _number(table.pop(key), key, "sim")
        for key in ("n_paths", "rng_seed"):
            if key in table:
                kwargs[key] = _integer(table.pop(key), key, "sim")
        if "antithetic" in table:
            kwargs["antithetic"] = _boolean(
                table.pop("antithetic"), "antithetic", "sim"
            )
        if "correction" in table:
            kwargs["correction"] = _string(
                table.pop("correction"), "correction", "sim"
            )
        _reject_unknown(table, "sim")
    if seed is not None:
        kwargs["rng_seed"] = int(seed)
    return SimConfig(**kwargs)


def _build_output(table):
    if table is None:
        return OutputSpec()
    table = _as_table(table, "output")
    kwargs = {}
    for key in ("solution_json", "value_csv", "estimate_json", "sweep_csv",
                "paths_csv"):
        if key in table:
            kwargs[key] = _string(table.pop(key), key, "output")
    if "n_record" in table:
        kwargs["n_record"] = _integer(table.pop("n_record"), "n_record", "output")
        if kwargs["n_record"] <= 0:
            raise InputError("field 'output.n_record' must be positive")
    _reject_unknown(table, "output")
    return OutputSpec(**kwargs)


def load_config(source, grid_hi=None, seed=None):
    """Parse and validate a problem declaration.

    Parameters
    ----------
    source : str or dict
        Path of a JSON file, or an already-decoded mapping.
    grid_hi : float, optional
        Raise the working grid's upper end at least to this level
        (command-line override).
    seed : int, optional
        Replace the configured simulation seed.

    Returns
    -------
    ProblemConfig

    Raises
    ------
    InputError
        Malformed JSON, unknown/missing fields, out-of-range values.
    ModelError
        Structurally divergent problems (``kappa < eta(0)``).
    """
    if isinstance(source, dict):
        raw = json.loads(json.dumps(source))
    else:
        try:
            with open(source) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError("config root must be a JSON object")
    version = _take(raw, "schema_version", "config")
    if version != SCHEMA_VERSION:
        raise InputError(
            f"unsupported schema_version {version!r}; "
            f"this build reads version {SCHEMA_VERSION}"
        )
    spec = _build_diffusion(_as_table(_take(raw, "diffusion", "config"), "diffusion"))
    reward_table = _as_table(_take(raw, "reward", "config"), "reward")
    grid_table = _take(raw, "grid", "config", None)
    sim_table = _take(raw, "sim", "config", None)
    output_table = _take(raw, "output", "config", None)
    basis_method = _string(
        _take(raw, "basis", "config", "auto"), "basis", "config"
    )
    x0 = _number(_take(raw, "x0", "config", 0.0), "x0", "config")
    _reject_unknown(raw, "config")

    if basis_method not in _BASIS_METHODS:
        raise InputError(
            f"field 'config.basis' must be one of {_BASIS_METHODS}, "
            f"got {basis_method!r}"
        )
    if x0 < 0.0:
        raise InputError(f"field 'config.x0' must be nonnegative, got {x0}")
    # r is needed to size the default grid, and the grid is needed to
    # resolve running rewards, so peek at r before building the reward.
    if "r" not in reward_table:
        raise InputError("missing field 'reward.r'")
    r = _number(reward_table["r"], "r", "reward")
    if r <= 0:
        raise InputError(f"field 'reward.r' must be positive, got {r}")
    grid, grid_explicit = _build_grid(grid_table, spec, r, grid_hi)
    reward = _build_reward(reward_table, spec, grid)
    sim = _build_sim(sim_table, seed)
    output = _build_output(output_table)
    return ProblemConfig(
        spec=spec,
        reward=reward,
        grid=grid,
        grid_explicit=grid_explicit,
        sim=sim,
        output=output,
        basis_method=basis_method,
        x0=x0,
    )


def ou_params_for(config):
    """The closed-form parameter bundle, when the problem is eligible.

    Returns ``OUParams`` when the configuration is a mean-reverting
    diffusion with constant marginal reward and ``kappa > eta0``;
    otherwise ``None``.
    """
    spec, reward = config.spec, config.reward
    if spec.name != "ou" or reward.name != "constant":
        return None
    try:
        return OUParams(
            mu=spec.params["mu"],
            theta=spec.params["theta"],
            sigma=spec.params["sigma"],
            r=reward.r,
            kappa=reward.kappa,
            eta0=reward.params["eta0"],
        )
    except (InputError, ModelError):
        # e.g. kappa = eta0 exactly: legal problem, but outside the
        # closed-form route's parameter domain
        return None


def resolve_basis(config):
    """Build the fundamental basis chosen by ``config.basis_method``.

    Returns
    -------
    (FundamentalBasis, str)
        The basis and the method actually used (``"ode"`` or
        ``"cylinder"``).
    """
    method = config.basis_method
    if method == "auto":
        method = "cylinder" if ou_params_for(config) is not None else "ode"
    if method == "cylinder":
        p = ou_params_for(config)
        if p is None:
            raise InputError(
                "basis 'cylinder' requires a mean-reverting diffusion with "
                "constant marginal reward and kappa > eta0; use 'ode'"
            )
        return ou_hat_basis(p, config.grid), "cylinder"
    return compute_basis(config.spec, config.reward.r, config.grid), "ode"
