"""Pure-numpy backend mirroring the compiled simulation kernels.

The affine entry points (``band_paths``, ``killed_paths``) take the same
arguments and produce estimates with the same accumulator semantics as
the compiled backend: projected Euler with overshoots booked into the
dD/dL integrals at the post-step discount, and survival-weighted
absorption for the killed chain.  The noise layout differs — one
vectorized ``numpy.random.Philox`` stream per call drawing a block of
normals per step — so the two backends agree in distribution, each being
bit-reproducible for a fixed seed, but not sample-by-sample.

This module also carries the general-coefficient variants (arbitrary
drift/volatility/reward callables) and a trajectory recorder; those have
no compiled counterpart.
"""

import numpy as np

from ..errors import PathError

__all__ = [
    "BACKEND",
    "band_paths",
    "killed_paths",
    "band_paths_general",
    "killed_paths_general",
    "record_paths",
]

BACKEND = "numpy"

# Fraction of non-finite legs above which a batch is abandoned outright
# (the engine applies the same threshold to the merged counts).
FAIL_FRACTION = 1e-3

_W_FLOOR = 1e-12


def _rng(key, stream_base):
    return np.random.Generator(
        np.random.Philox(key=np.array([key, stream_base], dtype=np.uint64))
    )


def _check_alive(xx, alive, fail_step, k):
    """Freeze legs whose state turned non-finite; record the first step."""
    bad = alive & ~np.isfinite(xx)
    if bad.any():
        fail_step[bad & (fail_step < 0)] = k
        alive = alive & ~bad
    return alive


def band_paths(key, stream_base, n_streams, antithetic, n_steps, x0, c0, c1,
               sdt, lo, hi, decay, aD, aL):
    """Affine band chain; writes per-leg accumulators, returns fail count."""

    def mu_step(x):
        return c1 * x + c0

    def noise_scale(x):
        return sdt

    def reward_inc(pre, oh):
        return oh  # constant reward is scaled by the engine

    return _band_loop(key, stream_base, n_streams, antithetic, n_steps, x0,
                      mu_step, noise_scale, reward_inc, lo, hi, decay, aD, aL)


def band_paths_general(key, stream_base, n_streams, antithetic, n_steps, x0,
                       mu_step, noise_scale, reward_inc, lo, hi, decay, aD,
                       aL):
    """Band chain with callable coefficients.

    ``mu_step(x)`` must return the full post-drift state ``x + mu(x) dt``
    and ``noise_scale(x)`` the per-step noise amplitude ``sigma(x)
    sqrt(dt)``, both vectorized.  ``reward_inc(pre, oh)`` maps the
    pre-projection states and overshoots to reward increments.
    """
    return _band_loop(key, stream_base, n_streams, antithetic, n_steps, x0,
                      mu_step, noise_scale, reward_inc, lo, hi, decay, aD, aL)


def _band_loop(key, stream_base, n_streams, antithetic, n_steps, x0, mu_step,
               noise_scale, reward_inc, lo, hi, decay, aD, aL):
    rng = _rng(key, stream_base)
    n_legs = 2 * n_streams if antithetic else n_streams
    x = np.full(n_legs, float(x0))
    accD = np.zeros(n_legs)
    accL = np.zeros(n_legs)
    alive = np.ones(n_legs, dtype=bool)
    fail_step = np.full(n_legs, -1, dtype=np.int64)
    disc = 1.0
    for k in range(n_steps):
        z = rng.standard_normal(n_streams)
        if antithetic:
            z = np.concatenate([z, -z])
        xx = mu_step(x) + noise_scale(x) * z
        alive = _check_alive(xx, alive, fail_step, k)
        xx = np.where(alive, xx, x)
        oh = np.maximum(xx - hi, 0.0)
        pre = xx
        xx = xx - oh
        ol = np.maximum(lo - xx, 0.0)
        xx = xx + ol
        disc *= decay
        accD += np.where(alive, disc * reward_inc(pre, oh), 0.0)
        accL += np.where(alive, disc * ol, 0.0)
        x = np.where(alive, xx, x)
    if antithetic:
        # interleave so leg 2s is the +z member of stream s and 2s+1 the
        # mirror, matching the compiled backend's output layout
        aD[0::2] = accD[:n_streams]
        aD[1::2] = accD[n_streams:]
        aL[0::2] = accL[:n_streams]
        aL[1::2] = accL[n_streams:]
    else:
        aD[:] = accD
        aL[:] = accL
    n_fail = int(np.count_nonzero(fail_step >= 0))
    if n_fail:
        first = int(fail_step[fail_step >= 0].min())
        if n_fail > FAIL_FRACTION * n_legs:
            raise PathError(
                f"{n_fail} of {n_legs} legs reached a non-finite state "
                f"(first at step {first})",
                step=first,
            )
    return n_fail


def killed_paths(key, stream_base, n_streams, antithetic, n_steps, x0, c0, c1,
                 sdt, sig2dt, lo, hi, pay_lo, pay_hi, rho_dt, reflect_low,
                 lo_reflect, val, resid):
    """Affine killed chain with constant kill rate; mirrors the C kernel."""

    def mu_step(x):
        return c1 * x + c0

    def noise_scale(x):
        return sdt

    def half_var(x):
        return 0.5 * sig2dt

    def rho_step(x_pre, x_post):
        return rho_dt

    return _killed_loop(key, stream_base, n_streams, antithetic, n_steps, x0,
                        mu_step, noise_scale, half_var, rho_step, lo, hi,
                        pay_lo, pay_hi, reflect_low, lo_reflect, val, resid)


def killed_paths_general(key, stream_base, n_streams, antithetic, n_steps, x0,
                         mu_step, noise_scale, half_var, rho_step, lo, hi,
                         pay_lo, pay_hi, reflect_low, lo_reflect, val, resid):
    """Killed chain with callable coefficients.

    ``half_var(x)`` returns ``sigma^2(x) dt / 2`` (the bridge-probability
    denominator) and ``rho_step(x_pre, x_post)`` the per-step kill
    exponent, e.g. the trapezoid ``(rho(x_pre)+rho(x_post))/2 * dt``.
    """
    return _killed_loop(key, stream_base, n_streams, antithetic, n_steps, x0,
                        mu_step, noise_scale, half_var, rho_step, lo, hi,
                        pay_lo, pay_hi, reflect_low, lo_reflect, val, resid)


def _killed_loop(key, stream_base, n_streams, antithetic, n_steps, x0,
                 mu_step, noise_scale, half_var, rho_step, lo, hi, pay_lo,
                 pay_hi, reflect_low, lo_reflect, val, resid):
    rng = _rng(key, stream_base)
    n_legs = 2 * n_streams if antithetic else n_streams
    x = np.full(n_legs, float(x0))
    w = np.ones(n_legs)
    disc = np.ones(n_legs)
    acc = np.zeros(n_legs)
    alive = np.ones(n_legs, dtype=bool)
    fail_step = np.full(n_legs, -1, dtype=np.int64)
    for k in range(n_steps):
        if not alive.any():
            break
        z = rng.standard_normal(n_streams)
        if antithetic:
            z = np.concatenate([z, -z])
        xx = mu_step(x) + noise_scale(x) * z
        alive = _check_alive(xx, alive, fail_step, k)
        xx = np.where(alive, xx, x)
        denom = 2.0 * half_var(x)
        rho_k = rho_step(x, xx)
        if reflect_low:
            xx = np.maximum(xx, lo_reflect)
            p_lo = np.zeros(n_legs)
            f_lo = np.full(n_legs, 0.5)
        else:
            gap_pre = x - lo
            gap_post = xx - lo
            crossed = gap_post <= 0.0
            ex = np.where(crossed, 0.0, -2.0 * gap_pre * gap_post / denom)
            p_lo = np.where(crossed, 1.0, np.exp(np.maximum(ex, -745.0)))
            f_lo = np.where(
                crossed, gap_pre / (gap_pre - gap_post + 1e-300), 0.5
            )
        gap_pre = hi - x
        gap_post = hi - xx
        crossed = gap_post <= 0.0
        ex = np.where(crossed, 0.0, -2.0 * gap_pre * gap_post / denom)
        p_hi = np.where(crossed, 1.0, np.exp(np.maximum(ex, -745.0)))
        f_hi = np.where(crossed, gap_pre / (gap_pre - gap_post + 1e-300), 0.5)
        live = alive.astype(float)
        acc += live * w * p_lo * pay_lo * disc * np.exp(-rho_k * f_lo)
        acc += live * w * (1.0 - p_lo) * p_hi * pay_hi * disc * np.exp(
            -rho_k * f_hi
        )
        w = np.where(alive, w * (1.0 - p_lo) * (1.0 - p_hi), w)
        disc = np.where(alive, disc * np.exp(-rho_k), disc)
        dead = w < _W_FLOOR
        w = np.where(dead, 0.0, w)
        alive = alive & ~dead
        x = np.where(alive, xx, x)
    out_val = acc
    out_resid = w * disc
    if antithetic:
        val[0::2] = out_val[:n_streams]
        val[1::2] = out_val[n_streams:]
        resid[0::2] = out_resid[:n_streams]
        resid[1::2] = out_resid[n_streams:]
    else:
        val[:] = out_val
        resid[:] = out_resid
    n_fail = int(np.count_nonzero(fail_step >= 0))
    if n_fail:
        first = int(fail_step[fail_step >= 0].min())
        if n_fail > FAIL_FRACTION * n_legs:
            raise PathError(
                f"{n_fail} of {n_legs} legs reached a non-finite state "
                f"(first at step {first})",
                step=first,
            )
    return n_fail


def record_paths(key, stream_base, n_record, n_steps, x0, mu_step,
                 noise_scale, lo, hi):
    """Simulate a few band legs storing full (t, X, L, D) trajectories.

    Returns pre-projection states as well, so callers can verify that
    every dD increment came from a step that overshot the barrier.
    """
    rng = _rng(key, stream_base)
    x = np.full(n_record, float(x0))
    L = np.zeros(n_record)
    D = np.zeros(n_record)
    X_out = np.empty((n_steps + 1, n_record))
    L_out = np.empty((n_steps + 1, n_record))
    D_out = np.empty((n_steps + 1, n_record))
    pre_out = np.empty((n_steps + 1, n_record))
    X_out[0] = x
    L_out[0] = 0.0
    D_out[0] = 0.0
    pre_out[0] = x
    for k in range(n_steps):
        z = rng.standard_normal(n_record)
        xx = mu_step(x) + noise_scale(x) * z
        pre_out[k + 1] = xx
        oh = np.maximum(xx - hi, 0.0)
        xx = xx - oh
        ol = np.maximum(lo - xx, 0.0)
        xx = xx + ol
        D += oh
        L += ol
        x = xx
        X_out[k + 1] = x
        L_out[k + 1] = L
        D_out[k + 1] = D
    return X_out, L_out, D_out, pre_out
