"""Free-boundary solver, value-function assembly, and HJB verification.

The optimal policy keeps the state inside [0, b*], with b* the unique
root of a one-dimensional objective: the marginal value at zero of the
band policy minus the reflection cost kappa.  The objective has two
algebraically equal forms,

* a cumulative integral of the speed-weighted case quantity against the
  normalized hat-basis spread (cheap to tabulate once per problem), and
* a pointwise bracket of eta against the hat basis at b,

and the solver uses the first to bracket and the second to polish, so any
disagreement between the routes is caught rather than averaged away.
"""

import csv
import math
import warnings
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import DomainTooSmall, InputError, ModelError, NumericalError
from .jsonio import dumps_17g
from .reward import case_quantity, classify

__all__ = [
    "ControlSolution",
    "HjbReport",
    "boundary_objective",
    "solve_boundary",
    "coefficients",
    "build_value",
    "epsilon_boundary_sequence",
    "verify_hjb",
    "transformed_scale_check",
    "solution_to_json",
    "value_to_csv",
]

# |objective| allowed at the accepted root, in units of kappa+1.  The floor
# applies on fine grids; on coarse grids the Simpson cumulative carries an
# O(dx^4) quadrature error relative to the pointwise form, so the tolerance
# must scale with it or legitimate roots would be rejected.
_OBJECTIVE_TOL = 1e-10
_OBJECTIVE_DX4 = 100.0


class _Workspace:
    """Per-(basis, reward) cache: cumulative objective and helpers."""

    def __init__(self, basis, spec, reward):
        self.basis = basis
        self.spec = spec
        self.reward = reward
        mask = basis.grid.points >= 0.0
        xs = basis.grid.points[mask]
        self.xs = xs
        hat_psi = basis.hat_psi[mask]
        hat_phi = basis.hat_phi[mask]
        hat_psi0 = hat_psi[0]
        hat_phi0 = hat_phi[0]
        h = hat_phi / hat_phi0 - hat_psi / hat_psi0
        m_hat = basis.speed_density_values()[mask]
        g = case_quantity(spec, reward, xs)
        integrand = m_hat * h * g
        prefactor = hat_phi0 * hat_psi0 / basis.w
        cum = cumulative_simpson(integrand, x=xs, initial=0.0)
        self._core = CubicHermiteSpline(xs, prefactor * cum, prefactor * integrand)
        self.eta0 = reward.eta_at_zero

    def objective(self, b, kappa=None):
        """Integral form of the boundary objective at b."""
        kappa = self.reward.kappa if kappa is None else kappa
        return self.eta0 - kappa + float(self._core(b))

    def objective_slope(self, b):
        return float(self._core.derivative()(b))

    def _bracket_values(self, b):
        basis = self.basis
        eta = float(self.reward.eta(b))
        eta_p = float(self.reward.eta_prime(b))
        s_hat = float(basis.hat_s_prime_at(b))
        i_phi = (float(basis.hat_phi_at(b)) * eta_p - float(basis.hat_phi_at(b, 1)) * eta) / s_hat
        i_psi = (float(basis.hat_psi_at(b)) * eta_p - float(basis.hat_psi_at(b, 1)) * eta) / s_hat
        return i_phi, i_psi

    def neumann_gap(self, b, kappa=None):
        """Pointwise form: marginal value at zero of the band at b, minus kappa."""
        kappa = self.reward.kappa if kappa is None else kappa
        i_phi, i_psi = self._bracket_values(b)
        basis = self.basis
        hat_psi0 = float(basis.hat_psi_at(0.0))
        hat_phi0 = float(basis.hat_phi_at(0.0))
        return (hat_psi0 * i_phi - hat_phi0 * i_psi) / basis.w - kappa

    def coefficients(self, b):
        i_phi, i_psi = self._bracket_values(b)
        return i_phi / self.basis.w, i_psi / self.basis.w

    def solve(self, case, kappa=None):
        kappa = self.reward.kappa if kappa is None else kappa
        x_hi = self.xs[-1]
        if case.variant == "B":
            lo = case.x_bar
            phi_at_bar = self.objective(lo, kappa)
            if phi_at_bar >= 0.0:
                raise NumericalError(
                    f"objective is nonnegative at the sign-change point x_bar="
                    f"{lo:.6g} ({phi_at_bar:.3e}); case B structure violated"
                )
            interior = self.xs[(self.xs > 0.0) & (self.xs <= lo)]
            if interior.size:
                worst = float(np.max(self._core(interior))) + self.eta0 - kappa
                if worst >= 0.0:
                    warnings.warn(
                        "boundary objective touches zero below x_bar; "
                        "uniqueness of the root is numerically doubtful",
                        stacklevel=2,
                    )
        else:
            lo = 0.0
        hi = 1.0
        while hi <= lo:
            hi *= 2.0
        hi = min(hi, x_hi)
        while self.objective(hi, kappa) <= 0.0:
            if hi >= x_hi:
                raise DomainTooSmall(
                    f"no sign change of the boundary objective up to x_hi={x_hi:.6g}; "
                    "enlarge the working grid"
                )
            hi = min(2.0 * hi, x_hi)
        eps = 1e-12 * (1.0 + abs(lo))
        root = brentq(
            lambda b: self.objective(b, kappa),
            lo + eps,
            hi,
            xtol=1e-12,
            rtol=8.9e-16,
        )
        root = self._polish(root, kappa)
        dx = float(np.max(np.diff(self.xs)))
        tol = max(_OBJECTIVE_TOL, _OBJECTIVE_DX4 * dx**4) * (abs(kappa) + 1.0)
        if abs(self.objective(root, kappa)) > tol:
            raise NumericalError(
                f"root at b={root:.12g} leaves objective residual "
                f"{self.objective(root, kappa):.3e}; integral and pointwise "
                "routes disagree"
            )
        return root

    def _polish(self, root, kappa):
        """Refine on the pointwise form, which carries no quadrature error."""
        f = lambda b: self.neumann_gap(b, kappa)
        width = max(1e-7, 1e-6 * root)
        lo, hi = root - width, root + width
        flo, fhi = f(lo), f(hi)
        grow = 0
        while flo * fhi > 0.0 and grow < 20:
            width *= 4.0
            lo, hi = max(root - width, 1e-300), root + width
            flo, fhi = f(lo), f(hi)
            grow += 1
        if flo * fhi > 0.0:
            return root  # pointwise form agrees to bracket width already
        return brentq(f, lo, hi, xtol=1e-14 * (1.0 + root), rtol=8.9e-16)


_workspaces = weakref.WeakKeyDictionary()


def _workspace(basis, spec, reward):
    per_basis = _workspaces.setdefault(basis, {})
    key = id(reward)
    ws = per_basis.get(key)
    if ws is None or ws.reward is not reward:
        ws = _Workspace(basis, spec, reward)
        per_basis[key] = ws
    return ws


def boundary_objective(basis, spec, reward, b):
    """Marginal value at zero of the band policy at b, minus kappa.

    Negative while the band is too narrow, zero exactly at the optimal
    boundary, and increasing through the root.
    """
    if not (b >= 0.0):
        raise InputError(f"b must be nonnegative, got {b}")
    if b > basis.grid.x_hi:
        raise InputError(f"b={b} beyond grid end {basis.grid.x_hi}")
    return _workspace(basis, spec, reward).objective(b)


def solve_boundary(basis, spec, reward, case):
    """Unique root of the boundary objective (band regimes only)."""
    if case.variant not in ("A", "B"):
        raise ModelError(f"no band boundary exists in case {case.variant}")
    if case.variant == "A" and reward.kappa_equals_eta0:
        raise ModelError(
            "case A with kappa = eta(0) has no positive boundary; the "
            "optimal band degenerates to {0} (use build_value, which "
            "returns the squeeze-at-zero solution)"
        )
    return _workspace(basis, spec, reward).solve(case)


def coefficients(basis, reward, b_star):
    """Weights (alpha, beta) of the increasing/decreasing solutions.

    Solve the two smooth-fit equations at b_star; expressed through the
    hat-basis bracket so the second-order condition is built in.
    """
    s_hat = float(basis.hat_s_prime_at(b_star))
    eta = float(reward.eta(b_star))
    eta_p = float(reward.eta_prime(b_star))
    i_phi = (float(basis.hat_phi_at(b_star)) * eta_p
             - float(basis.hat_phi_at(b_star, 1)) * eta) / s_hat
    i_psi = (float(basis.hat_psi_at(b_star)) * eta_p
             - float(basis.hat_psi_at(b_star, 1)) * eta) / s_hat
    return i_phi / basis.w, i_psi / basis.w


@dataclass(frozen=True, eq=False)
class ControlSolution:
    """Assembled value function and the policy it certifies."""

    case: object
    regime: str
    value: callable
    value_prime: callable
    value_second: callable
    b_star: float = None
    alpha: float = None
    beta: float = None
    v_at_bstar: float = None
    details: dict = field(default_factory=dict)


def _band_callables(basis, reward, b_star, alpha, beta):
    xs_all = basis.grid.points
    tail_nodes = xs_all[xs_all > b_star]
    ts = np.concatenate([[b_star], tail_nodes])
    eta_ts = np.asarray(reward.eta(ts), dtype=float)
    tail_cum = cumulative_simpson(eta_ts, x=ts, initial=0.0)
    v_b = alpha * float(basis.psi_at(b_star)) + beta * float(basis.phi_at(b_star))
    tail_sp = CubicHermiteSpline(ts, v_b + tail_cum, eta_ts)

    def value(x):
        x = np.asarray(x, dtype=float)
        inner = alpha * basis.psi_at(x) + beta * basis.phi_at(x)
        outer = tail_sp(np.clip(x, b_star, None))
        out = np.where(x <= b_star, inner, outer)
        return float(out) if out.ndim == 0 else out

    def value_prime(x):
        x = np.asarray(x, dtype=float)
        inner = alpha * basis.psi_at(x, 1) + beta * basis.phi_at(x, 1)
        outer = np.asarray(reward.eta(x), dtype=float)
        out = np.where(x <= b_star, inner, outer)
        return float(out) if out.ndim == 0 else out

    def value_second(x):
        x = np.asarray(x, dtype=float)
        inner = alpha * basis.psi_at(x, 2) + beta * basis.phi_at(x, 2)
        outer = np.asarray(reward.eta_prime(x), dtype=float)
        out = np.where(x <= b_star, inner, outer)
        return float(out) if out.ndim == 0 else out

    return value, value_prime, value_second, v_b


def build_value(basis, spec, reward, case, kappa_mode="auto"):
    """Assemble the solution in the regime dictated by case and kappa.

    kappa_mode selects how a reflection cost equal to eta(0) is treated:
    "auto" trusts the float comparison, "equal" forces the degenerate
    treatment, "gap" forces the band treatment.  Only case A is sensitive
    to the distinction.
    """
    if kappa_mode not in ("auto", "equal", "gap"):
        raise InputError(f"unknown kappa_mode {kappa_mode!r}")
    if case.variant == "indeterminate":
        raise ModelError(
            "sign pattern of the case quantity matches none of the three "
            f"structural cases; classifier report: {case.report}"
        )
    if case.variant == "C":
        phi_p0 = float(basis.phi_at(0.0, 1))
        c = reward.kappa / phi_p0  # phi'(0) < 0, so c <= 0

        def value(x):
            out = c * basis.phi_at(np.asarray(x, dtype=float))
            return float(out) if np.ndim(out) == 0 else out

        def value_prime(x):
            out = c * basis.phi_at(np.asarray(x, dtype=float), 1)
            return float(out) if np.ndim(out) == 0 else out

        def value_second(x):
            out = c * basis.phi_at(np.asarray(x, dtype=float), 2)
            return float(out) if np.ndim(out) == 0 else out

        return ControlSolution(
            case=case, regime="NoAction",
            value=value, value_prime=value_prime, value_second=value_second,
        )

    equal = reward.kappa_equals_eta0 if kappa_mode == "auto" else (kappa_mode == "equal")
    if case.variant == "A" and equal:
        sig0 = float(spec.sigma(0.0))
        const = (0.5 * sig0 * sig0 * float(reward.eta_prime(0.0))
                 + float(spec.mu(0.0)) * float(reward.eta(0.0))) / reward.r
        xs_all = basis.grid.points
        ts = xs_all[xs_all >= 0.0]
        eta_ts = np.asarray(reward.eta(ts), dtype=float)
        cum = cumulative_simpson(eta_ts, x=ts, initial=0.0)
        sp = CubicHermiteSpline(ts, const + cum, eta_ts)

        def value(x):
            out = sp(np.asarray(x, dtype=float))
            return float(out) if np.ndim(out) == 0 else out

        def value_prime(x):
            out = np.asarray(reward.eta(np.asarray(x, dtype=float)), dtype=float)
            return float(out) if np.ndim(out) == 0 else out

        def value_second(x):
            out = np.asarray(reward.eta_prime(np.asarray(x, dtype=float)), dtype=float)
            return float(out) if np.ndim(out) == 0 else out

        return ControlSolution(
            case=case, regime="SqueezeAtZero",
            value=value, value_prime=value_prime, value_second=value_second,
            v_at_bstar=const,
            details={"v_at_zero": const},
        )

    ws = _workspace(basis, spec, reward)
    b_star = ws.solve(case)
    alpha, beta = ws.coefficients(b_star)
    value, value_prime, value_second, v_b = _band_callables(
        basis, reward, b_star, alpha, beta
    )
    return ControlSolution(
        case=case, regime="ReflectAtBand",
        value=value, value_prime=value_prime, value_second=value_second,
        b_star=b_star, alpha=alpha, beta=beta, v_at_bstar=v_b,
    )


def epsilon_boundary_sequence(basis, spec, reward, deltas):
    """Boundaries of the perturbed problems kappa = eta(0) + delta.

    For case A with kappa = eta(0) the band policies at these boundaries
    approach the optimal value as delta drops to 0, and the sequence
    decreases to 0 with delta.
    """
    for d in deltas:
        if d <= 0:
            raise InputError(f"deltas must be positive, got {d}")
    ws = _workspace(basis, spec, reward)
    case = classify(spec, reward, basis.grid)
    if case.variant != "A":
        raise ModelError("the vanishing-boundary sequence is a case A construction")
    out = []
    for d in deltas:
        out.append((float(d), ws.solve(case, kappa=reward.eta_at_zero + float(d))))
    return out


@dataclass
class HjbReport:
    """Grid certificate for the variational inequality."""

    grid_points: np.ndarray
    max_pde_violation: float
    max_gradient_violation: float
    equality_regions: list
    neumann_residual: float
    tol: float

    @property
    def passed(self):
        if self.max_pde_violation >= self.tol:
            return False
        if self.max_gradient_violation >= self.tol:
            return False
        return all(res < self.tol for _, _, _, res in self.equality_regions)


def verify_hjb(solution, basis, spec, reward, grid):
    """Evaluate both branches of the variational inequality on the grid.

    The PDE branch is (L_X - r)v, the gradient branch is eta - v'; their
    positive parts must vanish to tolerance everywhere, and the branch
    matching the regime must be an equality on its region.
    """
    xs = grid.points[grid.points >= 0.0]
    v = np.asarray(solution.value(xs), dtype=float)
    v_p = np.asarray(solution.value_prime(xs), dtype=float)
    v_pp = np.asarray(solution.value_second(xs), dtype=float)
    sig = np.asarray(spec.sigma(xs), dtype=float)
    pde = 0.5 * sig * sig * v_pp + np.asarray(spec.mu(xs), dtype=float) * v_p \
        - reward.r * v
    grad = np.asarray(reward.eta(xs), dtype=float) - v_p
    tol = 1e-6 * (1.0 + float(np.max(np.abs(v))))
    regions = []
    if solution.regime == "ReflectAtBand":
        b = solution.b_star
        inner = xs <= b
        regions.append(("pde", 0.0, b, float(np.max(np.abs(pde[inner])))))
        outer = xs >= b
        regions.append(("gradient", b, xs[-1], float(np.max(np.abs(grad[outer])))))
    elif solution.regime == "SqueezeAtZero":
        regions.append(("gradient", 0.0, xs[-1], float(np.max(np.abs(grad)))))
    else:
        regions.append(("pde", 0.0, xs[-1], float(np.max(np.abs(pde)))))
    return HjbReport(
        grid_points=xs,
        max_pde_violation=float(np.max(pde)),
        max_gradient_violation=float(np.max(grad)),
        equality_regions=regions,
        neumann_residual=abs(float(solution.value_prime(0.0)) - reward.kappa),
        tol=tol,
    )


def transformed_scale_check(solution, basis, spec, reward, n_samples=241):
    """Tangency and dominance of the reward in transformed-scale space.

    With the decreasing hat solution scaled to 1 at zero, the marginal
    value becomes affine in the scale ratio y = hat_psi/hat_phi; the
    affine function is the chord from (y_o, kappa) to the transformed
    reward at y_*, is tangent there, and dominates the transformed reward
    between.  Convexity of the transformed reward must also follow the
    sign of the case quantity.
    """
    if solution.regime != "ReflectAtBand":
        raise ModelError("the transformed-scale picture applies to band regimes only")
    b = solution.b_star
    xs = np.linspace(0.0, b, n_samples)
    hat_psi = np.asarray(basis.hat_psi_at(xs), dtype=float)
    hat_phi = np.asarray(basis.hat_phi_at(xs), dtype=float)
    hat_phi_n = hat_phi / hat_phi[0]
    F = hat_psi / hat_phi
    if not np.all(np.diff(F) > 0.0):
        raise NumericalError("transformed scale is not increasing; basis corrupt")
    y = F
    y_o, y_star = y[0], y[-1]
    eta_t = np.asarray(reward.eta(xs), dtype=float) / hat_phi_n
    kappa = reward.kappa
    line = kappa * (y_star - y) / (y_star - y_o) + eta_t[-1] * (y - y_o) / (y_star - y_o)

    hat_psi_p = np.asarray(basis.hat_psi_at(xs, 1), dtype=float)
    hat_phi_p = np.asarray(basis.hat_phi_at(xs, 1), dtype=float)
    F_p = (hat_psi_p * hat_phi - hat_psi * hat_phi_p) / hat_phi ** 2
    eta_p = np.asarray(reward.eta_prime(xs), dtype=float)
    eta_t_x = (eta_p * hat_phi_n - np.asarray(reward.eta(xs), dtype=float)
               * hat_phi_p / hat_phi[0]) / hat_phi_n ** 2
    eta_t_prime_y = eta_t_x / F_p

    line_slope = (eta_t[-1] - kappa) / (y_star - y_o)
    tangency_residual = abs(line_slope - eta_t_prime_y[-1])
    dominance_gap = float(np.max(eta_t - line))

    # convexity of the transformed reward vs the sign of the case quantity
    d1 = np.diff(eta_t) / np.diff(y)
    mid = 0.5 * (y[1:] + y[:-1])
    d2 = np.diff(d1) / np.diff(mid)
    g_interior = np.asarray(case_quantity(spec, reward, xs[1:-1]), dtype=float)
    scale_d2 = np.max(np.abs(d2)) + 1e-30
    sign_tol = 1e-4 * scale_d2
    agree = np.ones(d2.shape, dtype=bool)
    agree[g_interior > sign_tol] = d2[g_interior > sign_tol] > -sign_tol
    agree[g_interior < -sign_tol] = d2[g_interior < -sign_tol] < sign_tol
    return {
        "y_o": float(y_o),
        "y_star": float(y_star),
        "line_at_yo": float(line[0]),
        "line_at_ystar": float(line[-1]),
        "eta_tilde_at_ystar": float(eta_t[-1]),
        "tangency_residual": float(tangency_residual),
        "tangency_scale": 1.0 + abs(line_slope),
        "dominance_gap": dominance_gap,
        "convexity_x": xs[1:-1],
        "eta_tilde_second": d2,
        "case_quantity_interior": g_interior,
        "convexity_sign_agrees": bool(np.all(agree)),
    }


def solution_to_json(solution):
    """JSON record of the solved policy (17 significant digits)."""
    return dumps_17g(
        {
            "case": solution.case.variant,
            "x_bar": solution.case.x_bar,
            "regime": solution.regime,
            "b_star": solution.b_star,
            "alpha": solution.alpha,
            "beta": solution.beta,
            "v_at_bstar": solution.v_at_bstar,
        }
    )


def value_to_csv(solution, xs, path, spec=None, reward=None):
    """CSV of (x, v, v', hjb slack) rows for plotting."""
    xs = np.asarray(xs, dtype=float)
    v = np.asarray(solution.value(xs), dtype=float)
    v_p = np.asarray(solution.value_prime(xs), dtype=float)
    if spec is not None and reward is not None:
        v_pp = np.asarray(solution.value_second(xs), dtype=float)
        sig = np.asarray(spec.sigma(xs), dtype=float)
        pde = 0.5 * sig * sig * v_pp + np.asarray(spec.mu(xs), dtype=float) * v_p \
            - reward.r * v
        slack = np.maximum(pde, np.asarray(reward.eta(xs), dtype=float) - v_p)
    else:
        slack = np.full_like(v, math.nan)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "v", "v_prime", "hjb_slack"])
        for row in zip(xs, v, v_p, slack):
            writer.writerow([f"{c:.17g}" for c in row])
