# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled backend: thin bindings over the C simulation kernels.

Both entry points fill caller-allocated per-leg output arrays and release
the GIL for the duration of the path loops.  They implement the affine
fast path only (drift c0 + c1*x per step, constant volatility); the
engine is responsible for eligibility checks and falls back to the numpy
backend otherwise.
"""

from libc.stdint cimport int64_t, uint64_t

cdef extern from "_kernels_core.h":
    void rb_band_paths(uint64_t key, uint64_t stream_base, int64_t n_streams,
                       int antithetic, int64_t n_steps, double x0, double c0,
                       double c1, double sdt, double lo, double hi,
                       double decay, double *aD, double *aL) nogil
    void rb_killed_paths(uint64_t key, uint64_t stream_base,
                         int64_t n_streams, int antithetic, int64_t n_steps,
                         double x0, double c0, double c1, double sdt,
                         double sig2dt, double lo, double hi, double pay_lo,
                         double pay_hi, double rho_dt, int reflect_low,
                         double lo_reflect, double *val,
                         double *resid) nogil

BACKEND = "cython"


def band_paths(uint64_t key, uint64_t stream_base, int64_t n_streams,
               bint antithetic, int64_t n_steps, double x0, double c0,
               double c1, double sdt, double lo, double hi, double decay,
               double[::1] aD, double[::1] aL):
    """Run the projected band chain; write per-leg dD/dL accumulators."""
    cdef int64_t legs = 2 if antithetic else 1
    if aD.shape[0] != n_streams * legs or aL.shape[0] != n_streams * legs:
        raise ValueError("output arrays must have one slot per leg")
    if n_streams == 0:
        return
    with nogil:
        rb_band_paths(key, stream_base, n_streams, antithetic, n_steps, x0,
                      c0, c1, sdt, lo, hi, decay, &aD[0], &aL[0])


def killed_paths(uint64_t key, uint64_t stream_base, int64_t n_streams,
                 bint antithetic, int64_t n_steps, double x0, double c0,
                 double c1, double sdt, double sig2dt, double lo, double hi,
                 double pay_lo, double pay_hi, double rho_dt,
                 bint reflect_low, double lo_reflect, double[::1] val,
                 double[::1] resid):
    """Run the survival-weighted killed chain; write payoff and residual."""
    cdef int64_t legs = 2 if antithetic else 1
    if val.shape[0] != n_streams * legs or resid.shape[0] != n_streams * legs:
        raise ValueError("output arrays must have one slot per leg")
    if n_streams == 0:
        return
    with nogil:
        rb_killed_paths(key, stream_base, n_streams, antithetic, n_steps, x0,
                        c0, c1, sdt, sig2dt, lo, hi, pay_lo, pay_hi, rho_dt,
                        reflect_low, lo_reflect, &val[0], &resid[0])
