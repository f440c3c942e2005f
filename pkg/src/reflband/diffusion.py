"""One-dimensional diffusion specifications and their basic densities.

The controlled state follows ``dX = mu(X) dt + sigma(X) dB`` between
interventions.  Alongside X we track its companion process with drift
``mu + sigma*sigma'`` (the process governing the derivative of the value
function), so every spec carries enough derivative information to form
both generators, the scale densities S' and S-hat', and the speed density
m-hat'.  All densities are anchored at ``x0_anchor`` (default 0) so that
S'(0) = S-hat'(0) = 1; every downstream formula is a ratio that does not
depend on this choice.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import InputError, NumericalError

__all__ = [
    "DiffusionSpec",
    "Grid",
    "ValidationReport",
    "brownian",
    "ou",
    "scale_density",
    "hat_scale_density",
    "speed_density",
    "generator_X",
    "generator_hatX",
    "validate_assumptions",
]

# Absolute / relative tolerance for the exponent quadratures.  The exponent
# feeds an exponential, so absolute accuracy is what matters.
QUAD_ABS_TOL = 1e-12
QUAD_REL_TOL = 1e-10


def _finite_difference(f, x, order=1):
    h = max(1e-6, 1e-6 * abs(x))
    if order == 1:
        return (f(x + h) - f(x - h)) / (2.0 * h)
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """Drift and volatility of the uncontrolled diffusion, with derivatives.

    Parameters
    ----------
    mu, sigma : callable
        Drift and volatility, vectorized over numpy arrays.
    mu_prime, sigma_prime : callable, optional
        Analytic derivatives.  When omitted, central finite differences
        are substituted and the fact is flagged by ``validate_assumptions``.
    lipschitz_L : float
        A bound for \\|mu'\\| and \\|sigma'\\| on the working domain.
    x0_anchor : float
        Anchor point of the scale densities; 0 keeps S'(0) = 1.
    name : str
        Optional identifier ("brownian", "ou", custom).
    params : dict
        Numeric parameters used to build the spec, when known.  A spec with
        ``name="ou"`` or ``name="brownian"`` and filled ``params`` is
        eligible for the compiled simulation kernels.
    """

    mu: callable
    sigma: callable
    mu_prime: callable = None
    sigma_prime: callable = None
    lipschitz_L: float = 10.0
    x0_anchor: float = 0.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mu_prime is None:
            object.__setattr__(
                self, "mu_prime", lambda x, f=self.mu: _finite_difference(f, x)
            )
            object.__setattr__(self, "derivatives_analytic", False)
        else:
            object.__setattr__(self, "derivatives_analytic", True)
        if self.sigma_prime is None:
            object.__setattr__(
                self, "sigma_prime", lambda x, f=self.sigma: _finite_difference(f, x)
            )
            if self.derivatives_analytic:
                object.__setattr__(self, "derivatives_analytic", False)

    def hat_mu(self, x):
        """Drift of the companion process, mu + sigma*sigma'."""
        return self.mu(x) + self.sigma(x) * self.sigma_prime(x)


def brownian(mu=0.0, sigma=1.0):
    """Drifted Brownian motion with constant coefficients."""
    if sigma <= 0:
        raise InputError(f"sigma must be positive, got {sigma}")
    return DiffusionSpec(
        mu=lambda x, m=mu: np.full_like(np.asarray(x, dtype=float), m)
        if np.ndim(x)
        else float(m),
        mu_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float))
        if np.ndim(x)
        else 0.0,
        sigma=lambda x, s=sigma: np.full_like(np.asarray(x, dtype=float), s)
        if np.ndim(x)
        else float(s),
        sigma_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float))
        if np.ndim(x)
        else 0.0,
        lipschitz_L=1.0,
        name="brownian",
        params={"mu": float(mu), "sigma": float(sigma)},
    )


def ou(mu=0.0, theta=1.0, sigma=1.0):
    """Mean-reverting linear drift mu - theta*x with constant volatility."""
    if theta <= 0:
        raise InputError(f"theta must be positive, got {theta}")
    if sigma <= 0:
        raise InputError(f"sigma must be positive, got {sigma}")
    return DiffusionSpec(
        mu=lambda x, m=mu, t=theta: m - t * np.asarray(x, dtype=float)
        if np.ndim(x)
        else m - t * x,
        mu_prime=lambda x, t=theta: np.full_like(np.asarray(x, dtype=float), -t)
        if np.ndim(x)
        else -t,
        sigma=lambda x, s=sigma: np.full_like(np.asarray(x, dtype=float), s)
        if np.ndim(x)
        else float(s),
        sigma_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float))
        if np.ndim(x)
        else 0.0,
        lipschitz_L=float(theta),
        name="ou",
        params={"mu": float(mu), "theta": float(theta), "sigma": float(sigma)},
    )


@dataclass(frozen=True)
class Grid:
    """Strictly increasing points covering [x_lo, x_hi] with 0 as a node."""

    points: np.ndarray
    spacing: str = "uniform"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 3:
            raise InputError("grid needs at least 3 points")
        if not np.all(np.diff(pts) > 0):
            raise InputError("grid points must be strictly increasing")
        hits = np.flatnonzero(pts == 0.0)
        if hits.size != 1:
            raise InputError("grid must contain 0 exactly once")
        if pts[0] > 0.0 or pts[-1] <= 0.0:
            raise InputError("grid must cover [x_lo, x_hi] with x_lo <= 0 < x_hi")
        object.__setattr__(self, "index_zero", int(hits[0]))

    @property
    def x_lo(self):
        return float(self.points[0])

    @property
    def x_hi(self):
        return float(self.points[-1])

    @classmethod
    def uniform(cls, x_lo, x_hi, n):
        """Build a grid of about n points containing 0 as an exact node.

        For x_lo < 0 the grid is uniform on each side of 0 separately,
        with spacings matched as closely as the point budget allows.
        """
        if not (x_lo <= 0.0 < x_hi):
            raise InputError("need x_lo <= 0 < x_hi")
        if x_lo == 0.0:
            return cls(np.linspace(0.0, x_hi, int(n)))
        m = int(round(-x_lo * (n - 1) / (x_hi - x_lo)))
        m = min(max(m, 1), int(n) - 2)
        left = np.linspace(x_lo, 0.0, m + 1)
        right = np.linspace(0.0, x_hi, int(n) - m)
        return cls(np.concatenate([left[:-1], right]))

    @classmethod
    def default_for(cls, spec, r, n=12801, x_hi_min=None):
        """Working grid sized to the diffusion's own scale.

        The half-width is 10 * sigma(0)/sqrt(2 r_o) with r_o a probe of
        min(r - mu'); far enough that the truncated ends are never felt.
        """
        s0 = float(spec.sigma(0.0))
        probe = np.linspace(-5.0 * s0 / math.sqrt(2.0 * r), 5.0 * s0 / math.sqrt(2.0 * r), 41)
        r_o = float(np.min(r - np.asarray([spec.mu_prime(float(x)) for x in probe])))
        if r_o <= 0:
            r_o = r
        sigma_scale = s0 / math.sqrt(2.0 * r_o)
        x_hi = 10.0 * sigma_scale
        if x_hi_min is not None:
            x_hi = max(x_hi, float(x_hi_min))
        return cls.uniform(-10.0 * sigma_scale, x_hi, n)


def _exponent_integral(spec, integrand, x):
    """Adaptive quadrature of an exponent from the anchor to x."""
    if not math.isfinite(x):
        raise InputError(f"non-finite evaluation point {x}")
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(
                integrand,
                spec.x0_anchor,
                x,
                epsabs=QUAD_ABS_TOL,
                epsrel=QUAD_REL_TOL,
                limit=200,
            )
        except integrate.IntegrationWarning as exc:
            raise NumericalError(
                f"exponent quadrature did not converge on [{spec.x0_anchor}, {x}]: {exc}"
            ) from exc
    if abs(err) > 50.0 * max(QUAD_ABS_TOL, QUAD_REL_TOL * abs(val)):
        raise NumericalError(
            f"exponent quadrature reached {err:.3e}, wanted "
            f"{QUAD_ABS_TOL:.1e} abs / {QUAD_REL_TOL:.1e} rel (value {val:.6e})"
        )
    return val


def scale_density(spec, x):
    """Density S'(x) = exp{-2 int_{x0}^{x} mu/sigma^2}."""

    def integrand(y):
        s = spec.sigma(y)
        return spec.mu(y) / (s * s)

    return math.exp(-2.0 * _exponent_integral(spec, integrand, x))


def hat_scale_density(spec, x):
    """Density of the companion scale, exp{-2 int (mu + sigma*sigma')/sigma^2}.

    Equals ``scale_density(x) * sigma^2(x0) / sigma^2(x)``, which is tested
    as an identity.
    """

    def integrand(y):
        s = spec.sigma(y)
        return (spec.mu(y) + s * spec.sigma_prime(y)) / (s * s)

    return math.exp(-2.0 * _exponent_integral(spec, integrand, x))


def speed_density(spec, x):
    """Speed density of the companion process, 2/(sigma^2 * S-hat')."""
    s = spec.sigma(x)
    return 2.0 / (s * s * hat_scale_density(spec, x))


def _check_finite(*vals):
    for v in vals:
        if not math.isfinite(v):
            raise InputError(f"non-finite input {v!r}")


def generator_X(spec, f_val, f_p, f_pp, x):
    """Apply (1/2) sigma^2 f'' + mu f' at x from pointwise values of f."""
    _check_finite(f_val, f_p, f_pp, x)
    s = spec.sigma(x)
    return 0.5 * s * s * f_pp + spec.mu(x) * f_p


def generator_hatX(spec, f_val, f_p, f_pp, x):
    """Apply (1/2) sigma^2 f'' + (mu + sigma*sigma') f' at x."""
    _check_finite(f_val, f_p, f_pp, x)
    s = spec.sigma(x)
    return 0.5 * s * s * f_pp + (spec.mu(x) + s * spec.sigma_prime(x)) * f_p


@dataclass
class ValidationReport:
    """Grid summary of the standing assumptions on the coefficients."""

    min_r_minus_mu_prime: float
    max_abs_mu_prime: float
    max_abs_sigma_prime: float
    min_sigma: float
    discount_dominates_drift: bool  # r - mu' bounded away from 0
    lipschitz_ok: bool
    sigma_positive: bool
    derivatives_analytic: bool
    speed_reward_integral: float = math.nan  # filled by the reward layer

    @property
    def passed(self):
        return (
            self.discount_dominates_drift
            and self.lipschitz_ok
            and self.sigma_positive
        )


def validate_assumptions(spec, r, grid):
    """Check the coefficient assumptions over the grid; never raises."""
    xs = grid.points
    mu_p = np.asarray([spec.mu_prime(float(x)) for x in xs], dtype=float)
    sig = np.asarray([spec.sigma(float(x)) for x in xs], dtype=float)
    sig_p = np.asarray([spec.sigma_prime(float(x)) for x in xs], dtype=float)
    min_gap = float(np.min(r - mu_p))
    max_mu_p = float(np.max(np.abs(mu_p)))
    max_sig_p = float(np.max(np.abs(sig_p)))
    min_sig = float(np.min(sig))
    return ValidationReport(
        min_r_minus_mu_prime=min_gap,
        max_abs_mu_prime=max_mu_p,
        max_abs_sigma_prime=max_sig_p,
        min_sigma=min_sig,
        discount_dominates_drift=min_gap > 0.0,
        lipschitz_ok=(max_mu_p <= spec.lipschitz_L + 1e-12)
        and (max_sig_p <= spec.lipschitz_L + 1e-12),
        sigma_positive=min_sig > 0.0,
        derivatives_analytic=spec.derivatives_analytic,
    )
