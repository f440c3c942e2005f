"""Reward data, the case-defining quantity, and problem classification.

The controller earns eta(x) per unit of control exerted at state x and
pays kappa per unit of reflection at zero, all discounted at rate r.
The sign pattern of

    G(x) = (1/2) sigma^2 eta'' + (mu + sigma*sigma') eta' - (r - mu') eta

splits the problem into three structural cases:

* A: G < 0 everywhere on (0, x_hi]; control at a band [0, b*].
* B: G > 0 on (0, x_bar), G < 0 beyond; band again, with b* > x_bar.
* C: G >= 0 everywhere; never act.

A running-reward formulation (collect pi(X) dt, pay alpha per unit of
control) can be converted to this marginal form via the resolvent; see
``from_running_reward``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.optimize import brentq

from .errors import InputError, ModelError, NumericalError

__all__ = [
    "RewardSpec",
    "CaseLabel",
    "constant_reward",
    "linear_reward",
    "exp_decay_reward",
    "case_quantity",
    "classify",
    "from_running_reward",
]


@dataclass(frozen=True, eq=False)
class RewardSpec:
    """Marginal reward eta with derivatives, reflection cost, discount.

    ``kappa >= eta(0)`` is enforced at construction: below that threshold
    the payoff can be driven to +infinity by shuttling mass across zero,
    so no finite solution exists.
    """

    eta: callable
    eta_prime: callable
    eta_second: callable
    kappa: float
    r: float
    name: str = "custom"
    params: dict = None

    def __post_init__(self):
        if not (self.r > 0.0) or not math.isfinite(self.r):
            raise InputError(f"discount rate must be positive, got {self.r}")
        if not math.isfinite(self.kappa):
            raise InputError("kappa must be finite")
        eta0 = float(self.eta(0.0))
        if not math.isfinite(eta0):
            raise InputError("eta(0) must be finite")
        if self.kappa < eta0 - 1e-12 * (1.0 + abs(eta0)):
            raise ModelError(
                f"kappa={self.kappa} < eta(0)={eta0}: the problem has no "
                "finite value (reflection at zero would be a money pump)"
            )

    @property
    def eta_at_zero(self):
        return float(self.eta(0.0))

    @property
    def kappa_equals_eta0(self):
        eta0 = self.eta_at_zero
        return abs(self.kappa - eta0) <= 1e-12 * (1.0 + abs(eta0))

    def with_kappa(self, kappa):
        return RewardSpec(
            eta=self.eta,
            eta_prime=self.eta_prime,
            eta_second=self.eta_second,
            kappa=float(kappa),
            r=self.r,
            name=self.name,
            params=self.params,
        )


def _const(c):
    return lambda x: np.full_like(np.asarray(x, dtype=float), c) if np.ndim(x) else float(c)


def constant_reward(eta0, kappa, r):
    """eta identically eta0; the benchmark dividend case."""
    return RewardSpec(
        eta=_const(eta0),
        eta_prime=_const(0.0),
        eta_second=_const(0.0),
        kappa=float(kappa),
        r=float(r),
        name="constant",
        params={"eta0": float(eta0)},
    )


def linear_reward(slope, intercept, kappa, r):
    """eta(x) = intercept + slope*x."""
    return RewardSpec(
        eta=lambda x, a=slope, b=intercept: b + a * np.asarray(x, dtype=float)
        if np.ndim(x)
        else b + a * x,
        eta_prime=_const(slope),
        eta_second=_const(0.0),
        kappa=float(kappa),
        r=float(r),
        name="linear",
        params={"slope": float(slope), "intercept": float(intercept)},
    )


def exp_decay_reward(eta0, lam, kappa, r):
    """eta(x) = eta0 * exp(-lam*x)."""
    if lam <= 0:
        raise InputError(f"decay rate must be positive, got {lam}")
    e = lambda x: eta0 * np.exp(-lam * np.asarray(x, dtype=float))
    return RewardSpec(
        eta=e,
        eta_prime=lambda x: -lam * e(x),
        eta_second=lambda x: lam * lam * e(x),
        kappa=float(kappa),
        r=float(r),
        name="exp-decay",
        params={"eta0": float(eta0), "lam": float(lam)},
    )


@dataclass(frozen=True)
class CaseLabel:
    """Structural case of the problem: 'A', 'B', 'C' or 'indeterminate'."""

    variant: str
    x_bar: float = None
    report: dict = None

    def __post_init__(self):
        if self.variant not in ("A", "B", "C", "indeterminate"):
            raise InputError(f"unknown case variant {self.variant!r}")
        if self.variant == "B" and not (self.x_bar and self.x_bar > 0):
            raise InputError("case B requires a positive x_bar")


def case_quantity(spec, reward, x):
    """G(x), the drift of the marginal value along the companion process."""
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    xs = np.atleast_1d(arr)
    sig = np.asarray(spec.sigma(xs), dtype=float)
    out = (
        0.5 * sig * sig * np.asarray(reward.eta_second(xs), dtype=float)
        + (np.asarray(spec.mu(xs), dtype=float) + sig * np.asarray(spec.sigma_prime(xs), dtype=float))
        * np.asarray(reward.eta_prime(xs), dtype=float)
        - (reward.r - np.asarray(spec.mu_prime(xs), dtype=float))
        * np.asarray(reward.eta(xs), dtype=float)
    )
    if not np.all(np.isfinite(out)):
        raise NumericalError("case quantity evaluated to a non-finite value")
    return float(out[0]) if scalar else out


def classify(spec, reward, grid, tol_scale=1e-9):
    """Locate the sign pattern of G on the nonnegative part of the grid.

    Returns case A when G stays below -tol, C when it stays above -tol and
    actually reaches nonnegative values, and B when there is exactly one
    down-crossing (located by root bisection between the bracketing grid
    nodes).  Anything else is labelled indeterminate with the offending
    samples attached, since the trichotomy does not cover it.
    """
    xs = grid.points[grid.points >= 0.0]
    g = case_quantity(spec, reward, xs)
    tol = tol_scale * (1.0 + float(np.max(np.abs(g))))
    if np.all(g < -tol):
        return CaseLabel("A")
    if np.all(g >= -tol):
        if float(np.max(g)) >= 0.0:
            return CaseLabel("C")
        return CaseLabel(
            "indeterminate",
            report={"reason": "G pinned inside the sign tolerance band", "tol": tol},
        )
    sign = np.where(g > tol, 1, np.where(g < -tol, -1, 0))
    nz = np.flatnonzero(sign)
    changes = np.flatnonzero(np.diff(sign[nz]) != 0)
    if changes.size == 1 and sign[nz[0]] > 0 and sign[nz[-1]] < 0:
        i = nz[changes[0]]
        j = nz[changes[0] + 1]
        x_bar = brentq(
            lambda y: case_quantity(spec, reward, float(y)),
            xs[i],
            xs[j],
            xtol=1e-13,
            rtol=8.9e-16,
        )
        return CaseLabel("B", x_bar=float(x_bar))
    bad = xs[np.flatnonzero(np.abs(np.diff(sign)) > 0)]
    return CaseLabel(
        "indeterminate",
        report={
            "reason": "sign pattern of G matches none of the three cases",
            "sign_changes_near": bad.tolist()[:16],
            "tol": tol,
        },
    )


def from_running_reward(spec, pi, alpha, r, grid, pi_prime=None):
    """Convert a running reward pi into an equivalent marginal reward.

    Solves (L_X - r) Pi = pi through the resolvent kernel built from the
    fundamental solutions (variation of parameters), which keeps Pi finite
    at 0+ and growth-controlled at the truncation ends, then returns the
    marginal data eta = Pi' - alpha, kappa = Pi'(0).  The spread
    kappa - eta(0) equals alpha by construction, so the result always
    satisfies the admissibility threshold.
    """
    if alpha <= 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    from .basis import compute_basis  # local import: basis depends on diffusion only

    basis = compute_basis(spec, r, grid)
    xs = grid.points
    pi_vals = np.asarray([pi(float(x)) for x in xs], dtype=float)
    if not np.all(np.isfinite(pi_vals)):
        raise InputError("pi evaluated to non-finite values on the grid")
    sig2 = np.asarray(spec.sigma(xs), dtype=float) ** 2
    weight = pi_vals / (sig2 * basis.s_prime)  # pi / (sigma^2 S')

    from scipy.integrate import cumulative_simpson

    lower = cumulative_simpson(basis.psi * weight, x=xs, initial=0.0)
    upper_rev = cumulative_simpson(
        (basis.phi * weight)[::-1], x=-xs[::-1], initial=0.0
    )
    upper = upper_rev[::-1]
    two_over_W = 2.0 / basis.W
    Pi = -two_over_W * (basis.phi * lower + basis.psi * upper)
    Pi_p = -two_over_W * (basis.phi_p * lower + basis.psi_p * upper)
    Pi_pp = 2.0 * (pi_vals + r * Pi - np.asarray(spec.mu(xs), dtype=float) * Pi_p) / sig2

    if pi_prime is None:
        pi_p_vals = np.gradient(pi_vals, xs)
    else:
        pi_p_vals = np.asarray([pi_prime(float(x)) for x in xs], dtype=float)
    mu_vals = np.asarray(spec.mu(xs), dtype=float)
    mu_p_vals = np.asarray(spec.mu_prime(xs), dtype=float)
    sig_vals = np.sqrt(sig2)
    sig_p_vals = np.asarray(spec.sigma_prime(xs), dtype=float)
    # third derivative from the differentiated resolvent equation
    Pi_ppp = (
        2.0 * (pi_p_vals + r * Pi_p - mu_p_vals * Pi_p - mu_vals * Pi_pp) / sig2
        - 2.0 * sig_p_vals * (pi_vals + r * Pi - mu_vals * Pi_p) * 2.0 / (sig2 * sig_vals)
    )

    kappa = float(Pi_p[grid.index_zero])
    eta_spline = CubicHermiteSpline(xs, Pi_p - alpha, Pi_pp)
    eta_p_spline = CubicHermiteSpline(xs, Pi_pp, Pi_ppp)
    eta_pp_spline = PchipInterpolator(xs, Pi_ppp)
    out = RewardSpec(
        eta=eta_spline,
        eta_prime=eta_p_spline,
        eta_second=eta_pp_spline,
        kappa=kappa,
        r=float(r),
        name="from-running-reward",
        params={"alpha": float(alpha)},
    )
    spread = out.kappa - out.eta_at_zero
    if abs(spread - alpha) > 1e-8 * (1.0 + abs(alpha)):
        raise ModelError(
            f"running-reward transform lost the cost spread: kappa - eta(0) = "
            f"{spread}, expected alpha = {alpha}"
        )
    return out


def speed_weighted_reward_integral(spec, reward, basis):
    """Proxy integrability diagnostic: int m-hat' |G| over [0, x_hi]."""
    xs = basis.grid.points[basis.grid.points >= 0.0]
    g = np.abs(case_quantity(spec, reward, xs))
    m_hat = basis.speed_density_values()[basis.grid.points >= 0.0]
    return float(np.trapezoid(m_hat * g, xs))
