"""Mean-reverting dividend model: cylinder functions, basis, sweeps."""

import math

import mpmath
import numpy as np
import pytest

from reflband.errors import InputError, ModelError, NumericalError
from reflband.ou import (
    OUParams,
    cylinder_D,
    sensitivity_sweep,
    solve_ou_boundary,
)


def test_cylinder_special_values():
    # D_{-1}(0) = sqrt(pi/2); D_{-2}(0) = 1
    assert cylinder_D(-1.0, 0.0) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)
    assert cylinder_D(-2.0, 0.0) == pytest.approx(1.0, rel=1e-12)
    # D_{-1}(x) = e^{x^2/4} sqrt(pi/2) erfc(x/sqrt(2))
    for x in (-0.5, 0.8, 2.0):
        expect = (
            math.exp(x * x / 4.0)
            * math.sqrt(math.pi / 2)
            * math.erfc(x / math.sqrt(2))
        )
        assert cylinder_D(-1.0, x) == pytest.approx(expect, rel=1e-11)


def test_cylinder_against_mpmath():
    for a, x in ((-1.5, 0.7), (-3.2, -1.1), (-0.3, 2.4)):
        expect = float(mpmath.pcfd(a, x))
        assert cylinder_D(a, x) == pytest.approx(expect, rel=1e-10)


def test_cylinder_satisfies_weber_equation():
    # u'' + (a + 1/2 - x^2/4) u = 0
    h = 1e-3
    for a, x in ((-1.3, 0.8), (-4.2, -1.1)):
        um, u0, up = (cylinder_D(a, x + k * h) for k in (-1, 0, 1))
        upp = (up - 2.0 * u0 + um) / (h * h)
        resid = upp + (a + 0.5 - x * x / 4.0) * u0
        scale = abs(upp) + abs(u0) + 1e-30
        assert abs(resid) / scale < 1e-6


def test_cylinder_guards():
    with pytest.raises(InputError):
        cylinder_D(0.0, 1.0)
    with pytest.raises(InputError):
        cylinder_D(0.5, 1.0)
    with pytest.raises(NumericalError):
        cylinder_D(-1.0, 200.0)


def test_params_defaults_and_validation():
    p = OUParams()
    assert (p.mu, p.theta, p.r, p.kappa, p.eta0) == (0.1, 1.0, 0.05, 1.0, 0.5)
    assert 0.5 * p.sigma**2 == pytest.approx(0.4, rel=1e-15)
    with pytest.raises(InputError):
        OUParams(theta=0.0)
    with pytest.raises(InputError):
        OUParams(sigma=-1.0)
    with pytest.raises(InputError):
        OUParams(r=0.0)
    with pytest.raises(InputError):
        OUParams(eta0=0.0)
    with pytest.raises(ModelError):
        OUParams(kappa=0.4)  # kappa must exceed eta0


def test_hat_basis_solves_companion_equation(dividend_problem):
    # finite differences of the tabulated values against the equation
    # (1/2) sigma^2 h'' + (mu - theta x) h' = (r + theta) h
    p, b = dividend_problem.p, dividend_problem.basis
    xs = b.grid.points
    h = xs[1] - xs[0]
    for vals in (b.hat_psi, b.hat_phi):
        d1 = (vals[2:] - vals[:-2]) / (2.0 * h)
        d2 = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / (h * h)
        mu_x = p.mu - p.theta * xs[1:-1]
        resid = 0.5 * p.sigma**2 * d2 + mu_x * d1 - (p.r + p.theta) * vals[1:-1]
        scale = (p.r + p.theta) * vals[1:-1] + 0.5 * p.sigma**2 * np.abs(d2)
        assert float(np.max(np.abs(resid) / scale)) < 1e-4


def test_recovered_pair_solves_original_equation(dividend_problem):
    p, b = dividend_problem.p, dividend_problem.basis
    xs = b.grid.points
    h = xs[1] - xs[0]
    for vals in (b.psi, b.phi):
        d1 = (vals[2:] - vals[:-2]) / (2.0 * h)
        d2 = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / (h * h)
        mu_x = p.mu - p.theta * xs[1:-1]
        resid = 0.5 * p.sigma**2 * d2 + mu_x * d1 - p.r * vals[1:-1]
        scale = np.abs(0.5 * p.sigma**2 * d2) + np.abs(mu_x * d1) + p.r * vals[1:-1]
        assert float(np.max(np.abs(resid) / scale)) < 1e-4


def test_hat_pair_monotone(dividend_problem):
    b = dividend_problem.basis
    assert np.all(b.hat_psi > 0) and np.all(np.diff(b.hat_psi) > 0)
    assert np.all(b.hat_phi > 0) and np.all(np.diff(b.hat_phi) < 0)


def test_value_at_boundary_identity(dividend_problem):
    # V(b*) = (eta0 / r) * (mu - theta b*)
    p, s = dividend_problem.p, dividend_problem.solution
    expect = p.eta0 / p.r * (p.mu - p.theta * s.b_star)
    assert s.v_at_bstar == pytest.approx(expect, rel=1e-8)


def test_value_concave_with_bracketed_slope(dividend_problem):
    s = dividend_problem.solution
    p = dividend_problem.p
    xs = np.linspace(0.0, 3.0, 301)
    vp = np.asarray(s.value_prime(xs), dtype=float)
    assert np.all(vp >= p.eta0 - 1e-10)
    assert np.all(vp <= p.kappa + 1e-10)
    assert np.all(np.diff(vp) <= 1e-10)  # marginal value never rises in x
    vpp = np.asarray(s.value_second(xs), dtype=float)
    assert np.all(vpp <= 1e-10)


def test_solver_wrapper_matches_fixture(dividend_problem):
    b = solve_ou_boundary(dividend_problem.p, grid=dividend_problem.grid, method="cylinder")
    assert b == pytest.approx(dividend_problem.solution.b_star, rel=1e-12)
    with pytest.raises(InputError):
        solve_ou_boundary(dividend_problem.p, grid=dividend_problem.grid, method="bogus")


def test_boundary_decreases_with_mean_reversion_speed(theta_sweep):
    reference = [1.61, 1.22, 1.03, 0.91, 0.82, 0.75, 0.70, 0.66]
    got = [row.b_star for row in theta_sweep.rows]
    assert all(row.error is None for row in theta_sweep.rows)
    for g, ref in zip(got, reference):
        assert abs(g - ref) <= 0.01  # references carry two decimal digits
    assert theta_sweep.verdicts["b_star_trend"] == "decreasing"
    assert theta_sweep.verdicts["value_nonincreasing"] is True
    assert theta_sweep.all_asserted_hold


def test_sweep_kappa(dividend_problem):
    res = sensitivity_sweep(dividend_problem.p, "kappa", [0.75, 1.0, 1.5])
    assert res.verdicts["b_star_nondecreasing"] is True
    assert res.verdicts["value_nonincreasing"] is True
    assert res.all_asserted_hold
    assert res.asserted == ("b_star_nondecreasing", "value_nonincreasing")


def test_sweep_eta0(dividend_problem):
    res = sensitivity_sweep(dividend_problem.p, "eta0", [0.3, 0.5, 0.7])
    # the boundary narrows as the dividend rate approaches the cost
    assert res.verdicts["b_star_nonincreasing"] is True
    assert res.verdicts["value_nondecreasing"] is True
    assert res.all_asserted_hold


def test_sweep_sigma(dividend_problem):
    res = sensitivity_sweep(
        dividend_problem.p, "sigma", [0.8, dividend_problem.p.sigma, 1.0]
    )
    assert res.verdicts["b_star_nondecreasing"] is True
    assert res.verdicts["value_nonincreasing"] is True
    assert res.all_asserted_hold


def test_sweep_validation(dividend_problem):
    with pytest.raises(InputError):
        sensitivity_sweep(dividend_problem.p, "mu", [0.1, 0.2])
    with pytest.raises(InputError):
        sensitivity_sweep(dividend_problem.p, "kappa", [])
    with pytest.raises(InputError):
        sensitivity_sweep(dividend_problem.p, "kappa", [1.0, 0.9])
    with pytest.raises(InputError):
        sensitivity_sweep(dividend_problem.p, "kappa", [1.0, math.inf])


def test_sweep_captures_per_value_failures(dividend_problem):
    res = sensitivity_sweep(dividend_problem.p, "kappa", [0.4, 1.0])
    assert res.rows[0].error is not None
    assert res.rows[0].error.startswith("ModelError")
    assert math.isnan(res.rows[0].b_star)
    assert res.rows[1].error is None
    assert math.isfinite(res.rows[1].b_star)
    assert res.all_asserted_hold  # verdicts run on the surviving rows


def test_sweep_csv(tmp_path, dividend_problem):
    res = sensitivity_sweep(dividend_problem.p, "eta0", [0.3, 0.5])
    path = tmp_path / "sweep.csv"
    res.to_csv(path)
    lines = path.read_text().splitlines()
    head = lines[0].split(",")
    assert head[:5] == ["eta0", "b_star", "v_at_zero", "v_at_bstar", "error"]
    assert set(head[5:]) == set(res.verdicts)
    assert len(lines) == 3
    assert float(lines[1].split(",")[0]) == 0.3
