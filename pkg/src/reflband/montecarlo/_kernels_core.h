/* Compiled Monte Carlo kernels: affine drift, constant volatility.
 *
 * Both kernels draw their noise from a counter-based Philox4x32-10
 * generator keyed by (key, stream index, step block), so every path is
 * reproducible in isolation and results do not depend on chunking.
 */
#ifndef REFLBAND_KERNELS_CORE_H
#define REFLBAND_KERNELS_CORE_H

#include <stdint.h>

/* Doubly-projected Euler chain on the clamp levels [lo, hi].
 *
 * Per step: xx = c1*x + c0 + sdt*z, overshoot above hi goes into aD,
 * shortfall below lo goes into aL, both discounted by decay^step.
 * Writes one (aD, aL) pair per leg; with antithetic != 0 each stream
 * produces two legs (+z / -z) stored at [2*s] and [2*s + 1].
 */
void rb_band_paths(uint64_t key, uint64_t stream_base, int64_t n_streams,
                   int antithetic, int64_t n_steps, double x0, double c0,
                   double c1, double sdt, double lo, double hi, double decay,
                   double *aD, double *aL);

/* Killed diffusion with absorbing barriers and survival weighting.
 *
 * Instead of sampling barrier hits, each step multiplies the path weight
 * by the Brownian-bridge survival probability and books the killed mass
 * times its payoff (pay_lo at the lower barrier, pay_hi at the upper),
 * discounted at the continuously-compounded rate rho (decay_rho per
 * step).  With reflect_low != 0 the lower barrier reflects at
 * lo_reflect instead of absorbing.  Writes the accumulated payoff and
 * the residual discounted weight at the horizon per leg.
 */
void rb_killed_paths(uint64_t key, uint64_t stream_base, int64_t n_streams,
                     int antithetic, int64_t n_steps, double x0, double c0,
                     double c1, double sdt, double sig2dt, double lo,
                     double hi, double pay_lo, double pay_hi, double rho_dt,
                     int reflect_low, double lo_reflect, double *val,
                     double *resid);

#endif
