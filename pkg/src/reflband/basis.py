"""Fundamental solutions of the killed generator on a grid.

The pair psi (increasing) and phi (decreasing) spans all solutions of

    (1/2) sigma^2 u'' + mu u' = r u.

Their first derivatives are, up to sign, the increasing/decreasing
fundamental pair of the companion equation with drift mu + sigma*sigma'
and kill rate r - mu', so a single integration per direction yields both
bases, their Wronskians, and everything the free-boundary solver needs.

Each direction is integrated in log form: the state is (log u, u'/u),
whose second component obeys a Riccati equation.  Starting beyond the
working domain with the frozen-coefficient root of the local quadratic
puts the integration on the wanted branch; the margin is sized so the
contraction toward that branch exceeds ~40 nats before the working domain
begins, which makes the unwanted mode's residue far below double
round-off.
"""

import csv
import math

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import InputError, NumericalError

__all__ = ["FundamentalBasis", "compute_basis", "hitting_laplace", "basis_to_csv"]

_IVP_RTOL = 1e-12
_IVP_ATOL = 1e-12
_MARGIN_NATS = 40.0


class FundamentalBasis:
    """Grid-sampled psi, phi, derivatives, scale densities and Wronskians.

    Instances are immutable by convention after construction.  Evaluation
    between nodes uses cubic Hermite interpolation from stored values and
    derivatives, so psi_at/phi_at are C^1 and their derivative data are
    mutually consistent.
    """

    def __init__(self, grid, psi, psi_p, psi_pp, psi_ppp, phi, phi_p, phi_pp,
                 phi_ppp, s_prime, hat_s_prime, sigma2_anchor, normalization):
        self.grid = grid
        self.psi = psi
        self.psi_p = psi_p
        self.psi_pp = psi_pp
        self.psi_ppp = psi_ppp
        self.phi = phi
        self.phi_p = phi_p
        self.phi_pp = phi_pp
        self.phi_ppp = phi_ppp
        self.s_prime = s_prime
        self.hat_s_prime = hat_s_prime
        self._sigma2_anchor = float(sigma2_anchor)
        self.normalization = normalization

        xs = grid.points
        w_pt = (psi_p * phi - phi_p * psi) / s_prime
        self.W = float(np.mean(w_pt))
        self.wronskian_rel_std = float(np.std(w_pt) / abs(self.W))
        hat_w_pt = (phi_pp * psi_p - psi_pp * phi_p) / hat_s_prime
        self.w = float(np.mean(hat_w_pt))
        self.hat_wronskian_rel_std = float(np.std(hat_w_pt) / abs(self.w))

        self._psi_sp = CubicHermiteSpline(xs, psi, psi_p)
        self._psi_p_sp = CubicHermiteSpline(xs, psi_p, psi_pp)
        self._psi_pp_sp = CubicHermiteSpline(xs, psi_pp, psi_ppp)
        self._phi_sp = CubicHermiteSpline(xs, phi, phi_p)
        self._phi_p_sp = CubicHermiteSpline(xs, phi_p, phi_pp)
        self._phi_pp_sp = CubicHermiteSpline(xs, phi_pp, phi_ppp)
        self._log_s_sp = CubicHermiteSpline(xs, np.log(s_prime),
                                            np.gradient(np.log(s_prime), xs))
        self._log_hat_s_sp = CubicHermiteSpline(xs, np.log(hat_s_prime),
                                                np.gradient(np.log(hat_s_prime), xs))
        self.tail_report = {
            "psi_tail_ratio": float(psi[-1] / max(psi[grid.index_zero], 1e-300)),
            "phi_flux_ratio": float(
                (abs(phi_p[-1]) / s_prime[-1])
                / max(abs(phi_p[grid.index_zero]) / s_prime[grid.index_zero], 1e-300)
            ),
        }

    # hat-basis views (increasing/decreasing pair of the companion equation)
    @property
    def hat_psi(self):
        return self.psi_p

    @property
    def hat_psi_p(self):
        return self.psi_pp

    @property
    def hat_phi(self):
        return -self.phi_p

    @property
    def hat_phi_p(self):
        return -self.phi_pp

    def psi_at(self, x, deriv=0):
        if deriv == 0:
            return self._psi_sp(x)
        if deriv == 1:
            return self._psi_p_sp(x)
        if deriv == 2:
            return self._psi_pp_sp(x)
        raise InputError(f"unsupported derivative order {deriv}")

    def phi_at(self, x, deriv=0):
        if deriv == 0:
            return self._phi_sp(x)
        if deriv == 1:
            return self._phi_p_sp(x)
        if deriv == 2:
            return self._phi_pp_sp(x)
        raise InputError(f"unsupported derivative order {deriv}")

    def hat_psi_at(self, x, deriv=0):
        return self.psi_at(x, deriv + 1)

    def hat_phi_at(self, x, deriv=0):
        return -self.phi_at(x, deriv + 1)

    def s_prime_at(self, x):
        return np.exp(self._log_s_sp(x))

    def hat_s_prime_at(self, x):
        return np.exp(self._log_hat_s_sp(x))

    def speed_density_at(self, x):
        """m-hat'(x) = 2/(sigma^2 S-hat'), with sigma^2 recovered from the
        stored density ratio (S-hat'/S' = sigma^2(anchor)/sigma^2)."""
        sig2 = self._sigma2_anchor * np.exp(self._log_s_sp(x) - self._log_hat_s_sp(x))
        return 2.0 / (sig2 * self.hat_s_prime_at(x))

    def speed_density_values(self):
        sig2 = self._sigma2_anchor * self.s_prime / self.hat_s_prime
        return 2.0 / (sig2 * self.hat_s_prime)

    def rescaled(self, c_psi, c_phi):
        """Same basis with psi multiplied by c_psi and phi by c_phi.

        Every exported formula is invariant under this; used by tests.
        """
        if c_psi <= 0 or c_phi <= 0:
            raise InputError("rescaling constants must be positive")
        return FundamentalBasis(
            self.grid,
            c_psi * self.psi, c_psi * self.psi_p, c_psi * self.psi_pp,
            c_psi * self.psi_ppp,
            c_phi * self.phi, c_phi * self.phi_p, c_phi * self.phi_pp,
            c_phi * self.phi_ppp,
            self.s_prime, self.hat_s_prime, self._sigma2_anchor,
            dict(self.normalization, rescaled=(c_psi, c_phi)),
        )


def _branch_rate(b, c, sig2):
    """Separation rate of the two frozen-coefficient exponents."""
    return 2.0 * math.sqrt(max(b * b + 2.0 * c * sig2, 1e-30)) / sig2


def _margin(spec, r, x_edge, direction, span):
    """Distance beyond x_edge until the wrong mode has decayed ~40 nats."""
    acc = 0.0
    m = 0.0
    dx = max(span / 400.0, 1e-3)
    cap = 20.0 * span + 10.0
    while acc < _MARGIN_NATS and m < cap:
        x = x_edge + direction * m
        sig = float(spec.sigma(x))
        b = float(spec.mu(x))
        acc += _branch_rate(b, r, sig * sig) * dx
        m += dx
    if acc < _MARGIN_NATS:
        raise NumericalError(
            f"could not find a starting margin beyond x={x_edge}: the "
            "frozen-coefficient decay rate stays too small"
        )
    return m


def _riccati_solve(spec, r, x_from, x_to, t_eval, increasing):
    """Integrate (log u, q=u'/u) for (1/2)sigma^2 u'' + mu u' = r u."""

    def rhs(x, y):
        sig = float(spec.sigma(x))
        sig2 = sig * sig
        b = float(spec.mu(x))
        q = y[1]
        return (q, 2.0 * (r - b * q) / sig2 - q * q)

    sig0 = float(spec.sigma(x_from))
    b0 = float(spec.mu(x_from))
    disc = math.sqrt(b0 * b0 + 2.0 * r * sig0 * sig0)
    q0 = (-b0 + disc) / (sig0 * sig0) if increasing else (-b0 - disc) / (sig0 * sig0)
    sol = solve_ivp(
        rhs,
        (x_from, x_to),
        (0.0, q0),
        method="DOP853",
        t_eval=t_eval,
        rtol=_IVP_RTOL,
        atol=_IVP_ATOL,
        dense_output=False,
    )
    if not sol.success:
        direction = "increasing" if increasing else "decreasing"
        raise NumericalError(
            f"integration of the {direction} solution failed: {sol.message}"
        )
    return sol.y[0], sol.y[1]


def _cumulative_exponent(spec, grid, hat):
    """log S' (or log S-hat') on the grid by cumulative Simpson."""
    xs = grid.points
    sig = np.asarray(spec.sigma(xs), dtype=float)
    sig2 = sig * sig
    f = np.asarray(spec.mu(xs), dtype=float) / sig2
    if hat:
        f = f + np.asarray(spec.sigma_prime(xs), dtype=float) / sig
    c = cumulative_simpson(-2.0 * f, x=xs, initial=0.0)
    return c - c[grid.index_zero]  # anchor: density equals 1 at x = 0


def compute_basis(spec, r, grid):
    """Build the fundamental basis for discount rate r on the given grid.

    The increasing solution is integrated upward from below the grid, the
    decreasing one downward from above it; both are normalized to 1 at 0.
    Second derivatives come from the defining equation, third derivatives
    from its derivative, so all stored derivative data are consistent to
    integrator accuracy rather than finite-difference accuracy.
    """
    if r <= 0:
        raise InputError(f"discount rate must be positive, got {r}")
    xs = grid.points
    span = grid.x_hi - grid.x_lo
    m_lo = _margin(spec, r, grid.x_lo, -1.0, span)
    m_hi = _margin(spec, r, grid.x_hi, +1.0, span)

    log_psi, q_psi = _riccati_solve(
        spec, r, grid.x_lo - m_lo, grid.x_hi, xs, increasing=True
    )
    log_phi_rev, q_phi_rev = _riccati_solve(
        spec, r, grid.x_hi + m_hi, grid.x_lo, xs[::-1], increasing=False
    )
    log_phi = log_phi_rev[::-1]
    q_phi = q_phi_rev[::-1]

    i0 = grid.index_zero
    log_psi = log_psi - log_psi[i0]
    log_phi = log_phi - log_phi[i0]
    if float(np.max(log_psi)) > 690.0 or float(np.max(log_phi)) > 690.0:
        raise NumericalError(
            "fundamental solution overflows double range on this grid; "
            "shrink the working domain"
        )
    psi = np.exp(log_psi)
    phi = np.exp(log_phi)
    psi_p = q_psi * psi
    phi_p = q_phi * phi

    sig = np.asarray(spec.sigma(xs), dtype=float)
    sig2 = sig * sig
    mu_v = np.asarray(spec.mu(xs), dtype=float)
    mu_p_v = np.asarray(spec.mu_prime(xs), dtype=float)
    sig_p_v = np.asarray(spec.sigma_prime(xs), dtype=float)
    psi_pp = 2.0 * (r * psi - mu_v * psi_p) / sig2
    phi_pp = 2.0 * (r * phi - mu_v * phi_p) / sig2
    hat_b = mu_v + sig * sig_p_v
    psi_ppp = 2.0 * ((r - mu_p_v) * psi_p - hat_b * psi_pp) / sig2
    phi_ppp = 2.0 * ((r - mu_p_v) * phi_p - hat_b * phi_pp) / sig2

    s_prime = np.exp(_cumulative_exponent(spec, grid, hat=False))
    hat_s_prime = np.exp(_cumulative_exponent(spec, grid, hat=True))

    basis = FundamentalBasis(
        grid, psi, psi_p, psi_pp, psi_ppp, phi, phi_p, phi_pp, phi_ppp,
        s_prime, hat_s_prime, float(spec.sigma(0.0)) ** 2,
        normalization={"point": 0.0, "psi": 1.0, "phi": 1.0,
                       "margins": (m_lo, m_hi), "r": float(r)},
    )
    if basis.wronskian_rel_std > 1e-7 or basis.hat_wronskian_rel_std > 1e-7:
        raise NumericalError(
            "Wronskian drifts across the grid "
            f"(rel std {basis.wronskian_rel_std:.2e} / "
            f"{basis.hat_wronskian_rel_std:.2e}); integration accuracy lost"
        )
    if not (np.all(psi_p > 0.0) and np.all(phi_p < 0.0)):
        raise NumericalError("monotonicity of the fundamental pair lost on the grid")
    return basis


def hitting_laplace(basis, x, n):
    """Expected discount at the first hit of level n, started at x in [0, n].

    The process is reflected at 0; the value is A(n) psi(x) + B(n) phi(x)
    with coefficients pinned by value 1 at n and zero slope at 0.
    """
    if not (0.0 <= x <= n):
        raise InputError(f"need 0 <= x <= n, got x={x}, n={n}")
    if n > basis.grid.x_hi:
        raise InputError(f"n={n} lies beyond the grid (x_hi={basis.grid.x_hi})")
    psi_p0 = float(basis.psi_at(0.0, 1))
    phi_p0 = float(basis.phi_at(0.0, 1))
    denom = float(basis.phi_at(n)) * psi_p0 - phi_p0 * float(basis.psi_at(n))
    if denom <= 0.0:
        raise NumericalError(f"degenerate hitting system at n={n} (denom={denom})")
    A = -phi_p0 / denom
    B = psi_p0 / denom
    return A * float(basis.psi_at(x)) + B * float(basis.phi_at(x))


def basis_to_csv(basis, path):
    """Dump grid samples of the basis for plotting or debugging."""
    xs = basis.grid.points
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "psi", "phi", "psi_p", "phi_p", "hat_psi", "hat_phi"])
        for i, x in enumerate(xs):
            writer.writerow(
                [
                    f"{x:.17g}",
                    f"{basis.psi[i]:.17g}",
                    f"{basis.phi[i]:.17g}",
                    f"{basis.psi_p[i]:.17g}",
                    f"{basis.phi_p[i]:.17g}",
                    f"{basis.hat_psi[i]:.17g}",
                    f"{basis.hat_phi[i]:.17g}",
                ]
            )
