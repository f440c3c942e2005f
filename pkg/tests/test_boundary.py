"""Free-boundary solver, value assembly, and the HJB certificate."""

import json
import math

import numpy as np
import pytest

from reflband.boundary import (
    boundary_objective,
    build_value,
    epsilon_boundary_sequence,
    solution_to_json,
    solve_boundary,
    transformed_scale_check,
    value_to_csv,
    verify_hjb,
)
from reflband.errors import InputError, ModelError
from reflband.reward import CaseLabel, classify, constant_reward


def test_reference_boundary(dividend_problem):
    assert dividend_problem.solution.regime == "ReflectAtBand"
    assert abs(dividend_problem.solution.b_star - 0.907312) <= 1e-6


def test_boundary_objective_crosses_zero(case_b_problem):
    p = case_b_problem
    b = p.solution.b_star
    assert boundary_objective(p.basis, p.spec, p.reward, b) == pytest.approx(
        0.0, abs=1e-9
    )
    assert boundary_objective(p.basis, p.spec, p.reward, 0.5 * b) < 0
    assert boundary_objective(p.basis, p.spec, p.reward, 1.5 * b) > 0
    with pytest.raises(InputError):
        boundary_objective(p.basis, p.spec, p.reward, -0.1)


def test_case_b_boundary_exceeds_sign_change(case_b_problem):
    p = case_b_problem
    assert p.case.variant == "B"
    assert p.solution.b_star > p.case.x_bar


def test_smooth_fit_at_boundary(dividend_problem):
    s = dividend_problem.solution
    b = s.b_star
    eta_b = float(dividend_problem.reward.eta(b))
    assert float(s.value_prime(b)) == pytest.approx(eta_b, rel=1e-8)
    assert float(s.value_second(b)) == pytest.approx(
        float(dividend_problem.reward.eta_prime(b)), abs=1e-8 * (1.0 + abs(eta_b))
    )
    # value is continuous across the boundary and grows like eta beyond it
    eps = 1e-4
    assert float(s.value(b + eps)) - float(s.value(b)) == pytest.approx(
        eta_b * eps, rel=1e-3
    )


def test_reflection_cost_matches_marginal_value_at_zero(dividend_problem):
    s = dividend_problem.solution
    assert float(s.value_prime(0.0)) == pytest.approx(dividend_problem.reward.kappa, rel=1e-9)


def test_hjb_certificate_band(dividend_problem):
    report = verify_hjb(
        dividend_problem.solution, dividend_problem.basis, dividend_problem.spec, dividend_problem.reward, dividend_problem.grid
    )
    assert report.passed
    assert report.neumann_residual < 1e-9
    branches = {region[0] for region in report.equality_regions}
    assert branches == {"pde", "gradient"}


def test_hjb_certificate_no_action(case_c_problem):
    p = case_c_problem
    report = verify_hjb(p.solution, p.basis, p.spec, p.reward, p.grid)
    assert report.passed
    assert report.equality_regions[0][0] == "pde"


def test_no_action_value_shape(case_c_problem):
    s = case_c_problem.solution
    assert s.regime == "NoAction"
    assert s.b_star is None
    assert float(s.value_prime(0.0)) == pytest.approx(
        case_c_problem.reward.kappa, rel=1e-12
    )
    xs = np.array([0.0, 1.0, 3.0, 6.0])
    vals = np.asarray(s.value(xs), dtype=float)
    assert np.all(vals <= 0.0)
    assert np.all(np.diff(vals) > 0)  # climbs toward zero from below
    # sigma^2 = 2 and r = 1 make phi(x) = exp(-x), so v(x) = -exp(-x)
    assert np.allclose(vals, -np.exp(-xs), rtol=1e-8)


def test_squeeze_at_zero_regime(dividend_problem):
    # with the reflection cost equal to the marginal reward at zero, the
    # optimal band degenerates and v(x) = mu(0) eta0 / r + eta0 x exactly
    reward = constant_reward(eta0=0.5, kappa=0.5, r=dividend_problem.p.r)
    case = classify(dividend_problem.spec, reward, dividend_problem.grid)
    s = build_value(dividend_problem.basis, dividend_problem.spec, reward, case)
    assert s.regime == "SqueezeAtZero"
    assert s.b_star is None
    assert float(s.value(0.0)) == pytest.approx(0.1 * 0.5 / 0.05, rel=1e-9)
    assert float(s.value(2.0)) == pytest.approx(1.0 + 0.5 * 2.0, rel=1e-9)
    assert float(s.value_prime(3.7)) == 0.5
    report = verify_hjb(s, dividend_problem.basis, dividend_problem.spec, reward, dividend_problem.grid)
    assert report.passed
    assert report.neumann_residual < 1e-12


def test_vanishing_cost_boundaries_decrease_to_zero(dividend_problem):
    reward = constant_reward(eta0=0.5, kappa=0.5, r=dividend_problem.p.r)
    deltas = [0.2, 0.1, 0.05, 0.025, 0.0125]
    pairs = epsilon_boundary_sequence(dividend_problem.basis, dividend_problem.spec, reward, deltas)
    bs = [b for _, b in pairs]
    assert [d for d, _ in pairs] == deltas
    assert all(b > 0 for b in bs)
    assert np.all(np.diff(bs) < 0)
    assert bs[-1] < 0.5 * bs[0]


def test_vanishing_cost_sequence_validation(dividend_problem, case_b_problem):
    reward = constant_reward(eta0=0.5, kappa=0.5, r=dividend_problem.p.r)
    with pytest.raises(InputError):
        epsilon_boundary_sequence(dividend_problem.basis, dividend_problem.spec, reward, [0.1, -0.1])
    with pytest.raises(ModelError):
        epsilon_boundary_sequence(
            case_b_problem.basis, case_b_problem.spec, case_b_problem.reward, [0.1]
        )


def test_solve_boundary_rejects_no_band_regimes(case_c_problem, dividend_problem):
    p = case_c_problem
    with pytest.raises(ModelError):
        solve_boundary(p.basis, p.spec, p.reward, p.case)
    reward = constant_reward(eta0=0.5, kappa=0.5, r=dividend_problem.p.r)
    case = classify(dividend_problem.spec, reward, dividend_problem.grid)
    with pytest.raises(ModelError):
        solve_boundary(dividend_problem.basis, dividend_problem.spec, reward, case)


def test_build_value_rejects_indeterminate(dividend_problem):
    label = CaseLabel("indeterminate", report={"reason": "test"})
    with pytest.raises(ModelError):
        build_value(dividend_problem.basis, dividend_problem.spec, dividend_problem.reward, label)
    with pytest.raises(InputError):
        build_value(dividend_problem.basis, dividend_problem.spec, dividend_problem.reward, dividend_problem.case,
                    kappa_mode="bogus")


def test_transformed_scale_tangency_and_dominance(dividend_problem):
    check = transformed_scale_check(
        dividend_problem.solution, dividend_problem.basis, dividend_problem.spec, dividend_problem.reward
    )
    assert check["tangency_residual"] < 1e-6 * check["tangency_scale"]
    assert check["dominance_gap"] < 1e-9 * (1.0 + dividend_problem.reward.kappa)
    assert check["line_at_yo"] == pytest.approx(dividend_problem.reward.kappa, rel=1e-12)
    assert check["convexity_sign_agrees"]
    assert check["y_star"] > check["y_o"]


def test_transformed_scale_needs_band(case_c_problem):
    p = case_c_problem
    with pytest.raises(ModelError):
        transformed_scale_check(p.solution, p.basis, p.spec, p.reward)


def test_solution_json_roundtrip(dividend_problem):
    text = solution_to_json(dividend_problem.solution)
    assert text.endswith("\n")
    record = json.loads(text)
    assert record["regime"] == "ReflectAtBand"
    assert record["case"] == "A"
    assert record["x_bar"] is None
    # 17 significant digits reproduce the float bit-for-bit
    assert record["b_star"] == dividend_problem.solution.b_star
    assert record["alpha"] == dividend_problem.solution.alpha


def test_value_csv(tmp_path, dividend_problem):
    path = tmp_path / "value.csv"
    xs = np.linspace(0.0, 2.0, 9)
    value_to_csv(dividend_problem.solution, xs, path, spec=dividend_problem.spec, reward=dividend_problem.reward)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,v,v_prime,hjb_slack"
    assert len(lines) == 10
    row = lines[1].split(",")
    assert float(row[0]) == 0.0
    assert float(row[1]) == pytest.approx(float(dividend_problem.solution.value(0.0)))
    assert float(row[3]) <= 1e-8  # slack is nonpositive up to rounding


def test_dual_construction_boundary_agreement(dividend_problem, dividend_ode_basis):
    alt = build_value(dividend_ode_basis, dividend_problem.spec, dividend_problem.reward, dividend_problem.case)
    assert abs(alt.b_star - dividend_problem.solution.b_star) < 1e-6
    for x in (0.0, 0.5, 1.0, 2.0):
        assert float(alt.value(x)) == pytest.approx(
            float(dividend_problem.solution.value(x)), abs=1e-6
        )
