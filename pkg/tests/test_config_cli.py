"""Config parsing and the command-line pipelines."""

import json
import math

import pytest

from reflband.cli import main
from reflband.config import load_config, ou_params_for, resolve_basis
from reflband.errors import InputError, ModelError


def dividend_config(**over):
    cfg = {
        "schema_version": 1,
        "diffusion": {
            "kind": "ou", "mu": 0.1, "theta": 1.0, "sigma": math.sqrt(0.8),
        },
        "reward": {"kind": "constant", "eta0": 0.5, "kappa": 1.0, "r": 0.05},
    }
    cfg.update(over)
    return cfg


SMALL_GRID = {"x_lo": -6.0, "x_hi": 6.0, "n": 1601}
QUICK_SIM = {"dt": 0.01, "n_paths": 2000, "rng_seed": 7, "horizon_T": 20.0}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_load_config_defaults():
    config = load_config(dividend_config())
    assert config.spec.name == "ou"
    assert config.reward.name == "constant"
    assert config.reward.kappa == 1.0
    assert not config.grid_explicit
    assert config.grid.points.size == 12801
    assert config.sim.dt == 1e-3 and config.sim.n_paths == 100_000
    assert config.basis_method == "auto"
    assert config.x0 == 0.0


def test_missing_fields_are_named():
    cfg = dividend_config()
    del cfg["reward"]["r"]
    with pytest.raises(InputError, match="reward.r"):
        load_config(cfg)
    cfg = dividend_config()
    del cfg["diffusion"]["sigma"]
    with pytest.raises(InputError, match="diffusion.sigma"):
        load_config(cfg)
    cfg = dividend_config()
    del cfg["reward"]
    with pytest.raises(InputError, match="config.reward"):
        load_config(cfg)


def test_unknown_fields_are_named():
    cfg = dividend_config()
    cfg["diffusion"]["speed"] = 2.0
    with pytest.raises(InputError, match="diffusion.speed"):
        load_config(cfg)
    with pytest.raises(InputError, match="config.extra"):
        load_config(dividend_config(extra=1))


def test_schema_version_is_checked():
    with pytest.raises(InputError, match="schema_version"):
        load_config(dividend_config(schema_version=2))


def test_field_types_are_checked():
    cfg = dividend_config()
    cfg["diffusion"]["sigma"] = "big"
    with pytest.raises(InputError, match="diffusion.sigma"):
        load_config(cfg)
    with pytest.raises(InputError, match="sim.n_paths"):
        load_config(dividend_config(sim={"n_paths": 1.5}))
    with pytest.raises(InputError, match="sim.antithetic"):
        load_config(dividend_config(sim={"antithetic": "yes"}))


def test_field_ranges_are_checked():
    cfg = dividend_config()
    cfg["diffusion"]["sigma"] = -1.0
    with pytest.raises(InputError, match="diffusion.sigma"):
        load_config(cfg)
    cfg = dividend_config()
    cfg["diffusion"]["theta"] = 0.0
    with pytest.raises(InputError, match="diffusion.theta"):
        load_config(cfg)
    cfg = dividend_config()
    cfg["reward"]["r"] = -0.05
    with pytest.raises(InputError, match="reward.r"):
        load_config(cfg)
    with pytest.raises(InputError, match="grid.n"):
        load_config(dividend_config(grid={"x_lo": -1.0, "x_hi": 1.0, "n": 5}))
    with pytest.raises(InputError, match="contain 0"):
        load_config(dividend_config(grid={"x_lo": 1.0, "x_hi": 2.0}))


def test_cheap_reflection_is_rejected_as_divergent():
    cfg = dividend_config()
    cfg["reward"]["kappa"] = 0.4
    with pytest.raises(ModelError, match="no finite value"):
        load_config(cfg)


def test_unreadable_sources(tmp_path):
    with pytest.raises(InputError, match="cannot read"):
        load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError, match="not valid JSON"):
        load_config(str(bad))
    with pytest.raises(InputError, match="root"):
        load_config(write_config(tmp_path, 3, "scalar.json"))


def test_overrides(tmp_path):
    config = load_config(dividend_config(grid=dict(SMALL_GRID)), grid_hi=9.0,
                         seed=123)
    assert config.grid_explicit
    assert config.grid.x_hi >= 9.0
    assert config.sim.rng_seed == 123


def test_ou_params_extraction():
    assert ou_params_for(load_config(dividend_config())) is not None
    bm = dividend_config()
    bm["diffusion"] = {"kind": "brownian", "mu": 0.1, "sigma": 1.0}
    assert ou_params_for(load_config(bm)) is None
    lin = dividend_config()
    lin["reward"] = {"kind": "linear", "slope": 1.0, "intercept": 0.0,
                     "kappa": 1.0, "r": 1.0}
    assert ou_params_for(load_config(lin)) is None
    # kappa = eta0 exactly: a legal problem, but not closed-form eligible
    eq = dividend_config()
    eq["reward"]["kappa"] = 0.5
    assert ou_params_for(load_config(eq)) is None


def test_resolve_basis_routes():
    config = load_config(dividend_config(grid=dict(SMALL_GRID)))
    _, method = resolve_basis(config)
    assert method == "cylinder"
    config = load_config(dividend_config(grid=dict(SMALL_GRID), basis="ode"))
    _, method = resolve_basis(config)
    assert method == "ode"
    eq = dividend_config(grid=dict(SMALL_GRID))
    eq["reward"]["kappa"] = 0.5
    _, method = resolve_basis(load_config(eq))
    assert method == "ode"  # auto falls back when closed form is ineligible
    bm = dividend_config(grid=dict(SMALL_GRID), basis="cylinder")
    bm["diffusion"] = {"kind": "brownian", "mu": 0.1, "sigma": 1.0}
    with pytest.raises(InputError, match="cylinder"):
        resolve_basis(load_config(bm))


def test_running_linear_reward_through_config():
    cfg = dividend_config(grid=dict(SMALL_GRID))
    cfg["reward"] = {"kind": "running-linear", "pi_slope": 0.5,
                     "pi_intercept": 1.0, "alpha": 0.4, "kappa": 0.0,
                     "r": 0.5}
    config = load_config(cfg)
    assert config.reward.name == "from-running-reward"
    spread = config.reward.kappa - float(config.reward.eta(0.0))
    assert spread == pytest.approx(0.4, rel=1e-8)


def test_cli_solve_writes_solution_and_value(tmp_path, capsys):
    path = write_config(tmp_path, dividend_config(grid=dict(SMALL_GRID)))
    out = tmp_path / "out"
    assert main(["solve", "--config", path, "--out", str(out)]) == 0
    captured = capsys.readouterr()
    assert "case A" in captured.out
    assert "regime ReflectAtBand" in captured.out
    assert "b_star 0.907" in captured.out
    assert "hjb pass" in captured.out
    record = json.loads((out / "solution.json").read_text())
    assert record["basis_method"] == "cylinder"
    assert record["hjb"]["passed"] is True
    assert record["b_star"] == pytest.approx(0.907312, abs=1e-4)
    value_lines = (out / "value.csv").read_text().splitlines()
    assert value_lines[0] == "x,v,v_prime,hjb_slack"
    assert len(value_lines) > 100


def test_cli_simulate_is_byte_deterministic(tmp_path, capsys):
    path = write_config(
        tmp_path, dividend_config(grid=dict(SMALL_GRID), sim=dict(QUICK_SIM))
    )
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--config", path, "--out", str(out)]) == 0
        outs.append((out / "estimate.json").read_bytes())
    assert outs[0] == outs[1]
    record = json.loads(outs[0])
    assert record["regime"] == "ReflectAtBand"
    assert record["policy_b"] == pytest.approx(0.907312, abs=1e-4)
    assert record["details"]["rng_seed"] == 7
    assert "estimate" in capsys.readouterr().out


def test_cli_simulate_seed_override_changes_output(tmp_path):
    path = write_config(
        tmp_path, dividend_config(grid=dict(SMALL_GRID), sim=dict(QUICK_SIM))
    )
    means = []
    for seed in ("1", "2"):
        out = tmp_path / f"seed{seed}"
        rc = main(["simulate", "--config", path, "--out", str(out),
                   "--seed", seed])
        assert rc == 0
        means.append(json.loads((out / "estimate.json").read_text())["mean"])
    assert means[0] != means[1]


def test_cli_simulate_records_paths(tmp_path):
    cfg = dividend_config(grid=dict(SMALL_GRID), sim=dict(QUICK_SIM),
                        output={"paths_csv": "paths.csv", "n_record": 2})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["simulate", "--config", path, "--out", str(out)]) == 0
    lines = (out / "paths.csv").read_text().splitlines()
    assert lines[0] == "leg,t,X,L,D"
    assert len(lines) > 10


def test_cli_simulate_squeeze_needs_explicit_barrier(tmp_path, capsys):
    cfg = dividend_config(grid=dict(SMALL_GRID),
                        sim={"dt": 1e-4, "n_paths": 500, "rng_seed": 3,
                             "horizon_T": 5.0})
    cfg["reward"]["kappa"] = 0.5  # equal to eta0: squeeze-at-zero regime
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["simulate", "--config", path, "--out", str(out)]) == 2
    assert "--policy-b" in capsys.readouterr().err
    rc = main(["simulate", "--config", path, "--out", str(out),
               "--policy-b", "0.05"])
    assert rc == 0
    record = json.loads((out / "estimate.json").read_text())
    assert record["regime"] == "SqueezeAtZero"
    assert record["policy_b"] == 0.05


def test_cli_simulate_never_act_regime(tmp_path):
    cfg = {
        "schema_version": 1,
        "diffusion": {"kind": "brownian", "mu": 0.0,
                      "sigma": math.sqrt(2.0)},
        "reward": {"kind": "exp-decay", "eta0": 1.0, "lam": 2.0,
                   "kappa": 1.0, "r": 1.0},
        "sim": {"dt": 0.005, "n_paths": 2000, "rng_seed": 5,
                "horizon_T": 8.0},
    }
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["simulate", "--config", path, "--out", str(out)]) == 0
    record = json.loads((out / "estimate.json").read_text())
    assert record["regime"] == "NoAction"
    assert record["policy_b"] is None
    assert record["mean"] <= 0.0
    assert record["analytic_value"] == pytest.approx(-1.0, abs=0.05)


def test_cli_sweep_prints_verdicts(tmp_path, capsys):
    path = write_config(tmp_path, dividend_config(grid=dict(SMALL_GRID)))
    out = tmp_path / "out"
    rc = main(["sweep", "--config", path, "--out", str(out),
               "--param", "kappa", "--values", "0.75,1.0,1.25"])
    assert rc == 0
    captured = capsys.readouterr()
    assert "b* nondecreasing: pass" in captured.out
    assert "value nonincreasing: pass" in captured.out
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 4
    assert lines[0].startswith("kappa,b_star,v_at_zero,v_at_bstar,error")


def test_cli_sweep_input_errors(tmp_path, capsys):
    path = write_config(tmp_path, dividend_config(grid=dict(SMALL_GRID)))
    out = tmp_path / "out"
    rc = main(["sweep", "--config", path, "--out", str(out),
               "--param", "kappa", "--values", ","])
    assert rc == 2
    assert "at least one number" in capsys.readouterr().err
    rc = main(["sweep", "--config", path, "--out", str(out),
               "--param", "kappa", "--values", "1.0,zebra"])
    assert rc == 2
    bm = dividend_config(grid=dict(SMALL_GRID))
    bm["diffusion"] = {"kind": "brownian", "mu": 0.1, "sigma": 1.0}
    bm_path = write_config(tmp_path, bm, "bm.json")
    rc = main(["sweep", "--config", bm_path, "--out", str(out),
               "--param", "kappa", "--values", "1.0,1.5"])
    assert rc == 2
    assert "mean-reverting" in capsys.readouterr().err


def test_cli_config_errors_exit_2(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["solve", "--config", str(tmp_path / "absent.json"),
               "--out", str(out)])
    assert rc == 2
    assert "cannot read" in capsys.readouterr().err
    cfg = dividend_config()
    cfg["diffusion"]["sigma"] = -2.0
    path = write_config(tmp_path, cfg, "bad_sigma.json")
    rc = main(["solve", "--config", path, "--out", str(out)])
    assert rc == 2
    assert "diffusion.sigma" in capsys.readouterr().err
