"""Fundamental-solution construction against Brownian closed forms."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from reflband.basis import basis_to_csv, compute_basis, hitting_laplace
from reflband.diffusion import Grid, brownian
from reflband.errors import InputError


def _bm_roots(mu, sigma, r):
    disc = math.sqrt(mu * mu + 2.0 * r * sigma * sigma)
    return (-mu + disc) / sigma**2, (-mu - disc) / sigma**2


@pytest.fixture(scope="module")
def bm_basis():
    spec = brownian(mu=0.2, sigma=1.0)
    grid = Grid.uniform(-6.0, 6.0, 2401)
    return SimpleNamespace(
        spec=spec, r=1.0, grid=grid, basis=compute_basis(spec, 1.0, grid)
    )


def test_brownian_basis_matches_exponentials(bm_basis):
    gp, gm = _bm_roots(0.2, 1.0, bm_basis.r)
    xs = bm_basis.grid.points
    b = bm_basis.basis
    assert np.allclose(b.psi, np.exp(gp * xs), rtol=1e-9)
    assert np.allclose(b.phi, np.exp(gm * xs), rtol=1e-9)
    assert np.allclose(b.psi_p, gp * np.exp(gp * xs), rtol=1e-9)
    assert np.allclose(b.phi_p, gm * np.exp(gm * xs), rtol=1e-9)


def test_brownian_wronskians(bm_basis):
    gp, gm = _bm_roots(0.2, 1.0, bm_basis.r)
    b = bm_basis.basis
    assert b.W == pytest.approx(gp - gm, rel=1e-9)
    assert b.wronskian_rel_std < 1e-8
    assert b.hat_wronskian_rel_std < 1e-8
    # ratio of companion to original Wronskian is 2r/sigma^2 at the anchor
    assert b.w / b.W == pytest.approx(2.0 * bm_basis.r / 1.0**2, rel=1e-9)


def test_ou_wronskians(dividend_problem, dividend_ode_basis):
    b = dividend_ode_basis
    assert b.W > 0 and b.w > 0
    assert b.wronskian_rel_std < 1e-8
    assert b.hat_wronskian_rel_std < 1e-8
    sig2 = float(dividend_problem.spec.sigma(0.0)) ** 2
    assert b.w / b.W == pytest.approx(2.0 * dividend_problem.p.r / sig2, rel=1e-9)


def test_stored_derivatives_match_finite_differences(dividend_ode_basis):
    b = dividend_ode_basis
    xs = b.grid.points
    h = xs[1] - xs[0]
    fd_psi = (b.psi[2:] - b.psi[:-2]) / (2.0 * h)
    fd_phi = (b.phi[2:] - b.phi[:-2]) / (2.0 * h)
    rel_psi = np.max(np.abs(fd_psi - b.psi_p[1:-1]) / np.abs(b.psi_p[1:-1]))
    rel_phi = np.max(np.abs(fd_phi - b.phi_p[1:-1]) / np.abs(b.phi_p[1:-1]))
    assert rel_psi < 1e-3
    assert rel_phi < 1e-3


def test_hat_pair_is_monotone_derivative_pair(dividend_ode_basis):
    b = dividend_ode_basis
    assert b.hat_psi is b.psi_p
    assert np.all(b.hat_psi > 0)
    assert np.all(b.hat_phi > 0)
    # the companion pair is again increasing/decreasing
    assert np.all(np.diff(b.hat_psi) > 0)
    assert np.all(np.diff(b.hat_phi) < 0)


def test_interpolated_evaluation_matches_nodes(bm_basis):
    b = bm_basis.basis
    x = float(bm_basis.grid.points[700])
    assert float(b.psi_at(x)) == pytest.approx(b.psi[700], rel=1e-12)
    assert float(b.phi_at(x, 1)) == pytest.approx(b.phi_p[700], rel=1e-12)
    # between nodes the Hermite interpolant stays within closed-form accuracy
    gp, _ = _bm_roots(0.2, 1.0, bm_basis.r)
    xm = x + 0.5 * (bm_basis.grid.points[1] - bm_basis.grid.points[0])
    assert float(b.psi_at(xm)) == pytest.approx(math.exp(gp * xm), rel=1e-8)


def test_hitting_discount_driftless_cosh_oracle():
    sigma, r, n = 1.3, 0.7, 2.0
    spec = brownian(mu=0.0, sigma=sigma)
    basis = compute_basis(spec, r, Grid.uniform(-5.0, 5.0, 2001))
    gam = math.sqrt(2.0 * r) / sigma
    for x in (0.0, 0.5, 1.2, 2.0):
        expect = math.cosh(gam * x) / math.cosh(gam * n)
        assert hitting_laplace(basis, x, n) == pytest.approx(expect, rel=1e-9)


def test_hitting_discount_drifted_oracle(bm_basis):
    gp, gm = _bm_roots(0.2, 1.0, bm_basis.r)
    n = 3.0

    def oracle(x):
        num = gp * math.exp(gm * x) - gm * math.exp(gp * x)
        den = gp * math.exp(gm * n) - gm * math.exp(gp * n)
        return num / den

    for x in (0.0, 0.7, 1.9, 3.0):
        got = hitting_laplace(bm_basis.basis, x, n)
        assert got == pytest.approx(oracle(x), rel=1e-9)


def test_hitting_discount_shape(bm_basis):
    b = bm_basis.basis
    n = 2.5
    vals = [hitting_laplace(b, x, n) for x in np.linspace(0.0, n, 21)]
    assert all(0.0 < v <= 1.0 + 1e-12 for v in vals)
    assert vals[-1] == pytest.approx(1.0, rel=1e-12)
    assert np.all(np.diff(vals) > 0)  # closer to the target, larger discount
    # for a fixed start, a farther target means a smaller expected discount
    levels = [1.0, 1.5, 2.0, 3.0]
    at_half = [hitting_laplace(b, 0.5, n) for n in levels]
    assert np.all(np.diff(at_half) < 0)


def test_hitting_discount_is_normalization_invariant(bm_basis):
    scaled = bm_basis.basis.rescaled(2.0, 3.5)
    for x, n in ((0.0, 2.0), (1.0, 2.0), (2.4, 2.5)):
        assert hitting_laplace(scaled, x, n) == pytest.approx(
            hitting_laplace(bm_basis.basis, x, n), rel=1e-12
        )


def test_hitting_discount_rejects_bad_arguments(bm_basis):
    with pytest.raises(InputError):
        hitting_laplace(bm_basis.basis, -0.1, 2.0)
    with pytest.raises(InputError):
        hitting_laplace(bm_basis.basis, 2.5, 2.0)
    with pytest.raises(InputError):
        hitting_laplace(bm_basis.basis, 0.5, 100.0)


def test_rescaled_rejects_nonpositive_constants(bm_basis):
    with pytest.raises(InputError):
        bm_basis.basis.rescaled(-1.0, 2.0)


def test_compute_basis_rejects_nonpositive_rate(bm_basis):
    with pytest.raises(InputError):
        compute_basis(bm_basis.spec, 0.0, bm_basis.grid)


def test_basis_csv_roundtrip(tmp_path, bm_basis):
    path = tmp_path / "basis.csv"
    basis_to_csv(bm_basis.basis, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,psi,phi,psi_p,phi_p,hat_psi,hat_phi"
    assert len(lines) == 1 + bm_basis.grid.points.size
    first = lines[1].split(",")
    assert float(first[0]) == pytest.approx(bm_basis.grid.points[0])
    assert float(first[1]) == pytest.approx(bm_basis.basis.psi[0], rel=1e-15)
