"""Shared fixtures: the reference dividend problem and cached MC runs.

The expensive artifacts (fundamental bases on the default grid, the
pinned-configuration Monte Carlo batch) are session-scoped so the
acceptance module and the unit tests share one computation.
"""

from types import SimpleNamespace

import pytest

from reflband.basis import compute_basis
from reflband.boundary import build_value
from reflband.diffusion import brownian
from reflband.montecarlo import SimConfig, estimate_payoff
from reflband.ou import OUParams, ou_hat_basis
from reflband.reward import classify, exp_decay_reward, linear_reward

ACCEPT_SEED = 1


@pytest.fixture(scope="session")
def dividend_problem():
    """Reference mean-reverting dividend problem, solved analytically."""
    p = OUParams()
    spec = p.diffusion()
    reward = p.reward()
    grid = p.default_grid()
    basis = ou_hat_basis(p, grid)
    case = classify(spec, reward, grid)
    solution = build_value(basis, spec, reward, case)
    return SimpleNamespace(
        p=p, spec=spec, reward=reward, grid=grid, basis=basis, case=case,
        solution=solution,
    )


@pytest.fixture(scope="session")
def dividend_ode_basis(dividend_problem):
    """Generic shooting-constructed basis on the same problem and grid."""
    return compute_basis(dividend_problem.spec, dividend_problem.p.r, dividend_problem.grid)


@pytest.fixture(scope="session")
def case_b_problem():
    """Linear reward on drifted Brownian motion: one sign change of the
    case quantity G(x) = mu - r x at x_bar = mu / r."""
    spec = brownian(mu=0.5, sigma=1.0)
    reward = linear_reward(slope=1.0, intercept=0.0, kappa=1.0, r=1.0)
    from reflband.diffusion import Grid

    grid = Grid.default_for(spec, r=reward.r)
    basis = compute_basis(spec, reward.r, grid)
    case = classify(spec, reward, grid)
    solution = build_value(basis, spec, reward, case)
    return SimpleNamespace(
        spec=spec, reward=reward, grid=grid, basis=basis, case=case,
        solution=solution,
    )


@pytest.fixture(scope="session")
def case_c_problem():
    """Exponentially decaying reward on driftless Brownian motion: the
    case quantity is nonnegative, so never acting is optimal."""
    import math

    spec = brownian(mu=0.0, sigma=math.sqrt(2.0))
    reward = exp_decay_reward(eta0=1.0, lam=2.0, kappa=1.0, r=1.0)
    from reflband.diffusion import Grid

    grid = Grid.default_for(spec, r=reward.r)
    basis = compute_basis(spec, reward.r, grid)
    case = classify(spec, reward, grid)
    solution = build_value(basis, spec, reward, case)
    return SimpleNamespace(
        spec=spec, reward=reward, grid=grid, basis=basis, case=case,
        solution=solution,
    )


@pytest.fixture(scope="session")
def theta_sweep(dividend_problem):
    """Boundary and value along the reference mean-reversion-speed axis."""
    from reflband.ou import sensitivity_sweep

    thetas = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
    return sensitivity_sweep(dividend_problem.p, "theta", thetas)


@pytest.fixture(scope="session")
def pinned_band_mc(dividend_problem):
    """Band-policy estimates at the pinned settings (dt=1e-3, n=1e5).

    Used by both the consistency acceptance test and the dt-halving
    check; computing them once keeps the suite inside its time budget.
    """
    import time

    cfg = SimConfig(dt=1e-3, n_paths=100_000, rng_seed=ACCEPT_SEED)
    b = dividend_problem.solution.b_star
    t0 = time.time()
    ests = {
        name: estimate_payoff(dividend_problem.spec, dividend_problem.reward, b, x, cfg)
        for name, x in (
            ("x0", 0.0), ("half", b / 2), ("b", b), ("twice", 2 * b),
        )
    }
    return SimpleNamespace(cfg=cfg, b=b, estimates=ests,
                           elapsed=time.time() - t0)
