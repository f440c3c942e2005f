/* Hot loops for the Monte Carlo engine.  Pure C99, no Python types.
 *
 * Noise: Philox4x32-10 keyed by the 64-bit stream key, with the counter
 * holding (stream id, step block, salt, salt).  Each 128-bit block maps
 * to two uniforms in (0,1) via the top 53 bits of each 64-bit half and
 * then to two standard normals by Box-Muller, consumed by steps 2j and
 * 2j+1 of the owning leg.  Uniforms are bounded away from 0, so every
 * normal satisfies |z| <= sqrt(106*log 2) < 8.6 and the affine state
 * recursion cannot overflow for validated parameters.
 *
 * The per-pass layout (fill uniforms, then radius, then cos, then sin,
 * then the projection step) keeps each inner loop down to one libm call
 * so the compiler can use the vectorized math library.
 */
#include "_kernels_core.h"

#include <math.h>

#define CH 256

#define PHILOX_M0 0xD2511F53u
#define PHILOX_M1 0xCD9E8D57u
#define PHILOX_W0 0x9E3779B9u
#define PHILOX_W1 0xBB67AE85u
#define SALT2 0x2545F491u
#define SALT3 0x4F6CDD1Du

#define TWO_PI 6.28318530717958647692528676655900577
#define TWO_POW_M53 1.11022302462515654042363166809082e-16

/* One Philox4x32-10 block for (key, stream, blk) -> two uniforms. */
static inline void philox_pair(uint64_t key, uint64_t stream, uint32_t blk,
                               double *u1, double *u2)
{
    uint32_t x0 = (uint32_t)stream;
    uint32_t x1 = blk;
    uint32_t x2 = SALT2 ^ (uint32_t)(stream >> 32);
    uint32_t x3 = SALT3;
    uint32_t k0 = (uint32_t)key;
    uint32_t k1 = (uint32_t)(key >> 32);
    for (int r = 0; r < 10; r++) {
        uint64_t p0 = (uint64_t)PHILOX_M0 * x0;
        uint64_t p1 = (uint64_t)PHILOX_M1 * x2;
        uint32_t h0 = (uint32_t)(p0 >> 32), l0 = (uint32_t)p0;
        uint32_t h1 = (uint32_t)(p1 >> 32), l1 = (uint32_t)p1;
        x0 = h1 ^ x1 ^ k0;
        x1 = l1;
        x2 = h0 ^ x3 ^ k1;
        x3 = l0;
        k0 += PHILOX_W0;
        k1 += PHILOX_W1;
    }
    uint64_t a = x0 | ((uint64_t)x1 << 32);
    uint64_t b = x2 | ((uint64_t)x3 << 32);
    *u1 = ((double)(a >> 11) + 0.5) * TWO_POW_M53;
    *u2 = ((double)(b >> 11) + 0.5) * TWO_POW_M53;
}

static void philox_block(uint64_t key, uint64_t stream_base, int64_t n,
                         uint32_t blk, double *restrict u1,
                         double *restrict u2)
{
    for (int64_t i = 0; i < n; i++)
        philox_pair(key, stream_base + (uint64_t)i, blk, &u1[i], &u2[i]);
}

static void bm_normals(int64_t n, const double *restrict u1,
                       const double *restrict u2, double *restrict z1,
                       double *restrict z2)
{
    double rr[CH], an[CH];
    for (int64_t i = 0; i < n; i++)
        rr[i] = sqrt(-2.0 * log(u1[i]));
    for (int64_t i = 0; i < n; i++)
        an[i] = TWO_PI * u2[i];
    for (int64_t i = 0; i < n; i++)
        z1[i] = rr[i] * cos(an[i]);
    for (int64_t i = 0; i < n; i++)
        z2[i] = rr[i] * sin(an[i]);
}

/* One projected Euler step for a block of legs sharing a noise sign. */
static void band_step(int64_t n, double *restrict x, const double *restrict z,
                      double sgn_sdt, double c0, double c1, double lo,
                      double hi, double disc, double *restrict aD,
                      double *restrict aL)
{
    for (int64_t i = 0; i < n; i++) {
        double xx = c1 * x[i] + c0 + sgn_sdt * z[i];
        double oh = xx - hi;
        oh = oh > 0.0 ? oh : 0.0;
        xx -= oh;
        double ol = lo - xx;
        ol = ol > 0.0 ? ol : 0.0;
        xx += ol;
        aD[i] += disc * oh;
        aL[i] += disc * ol;
        x[i] = xx;
    }
}

void rb_band_paths(uint64_t key, uint64_t stream_base, int64_t n_streams,
                   int antithetic, int64_t n_steps, double x0, double c0,
                   double c1, double sdt, double lo, double hi, double decay,
                   double *aD, double *aL)
{
    int64_t legs = antithetic ? 2 : 1;
    int64_t n_blocks = (n_steps + 1) / 2;
    for (int64_t base = 0; base < n_streams; base += CH) {
        int64_t n = n_streams - base;
        if (n > CH)
            n = CH;
        double u1[CH], u2[CH], z1[CH], z2[CH];
        double xp[CH], dp[CH], lp[CH];
        double xm[CH], dm[CH], lm[CH];
        for (int64_t i = 0; i < n; i++) {
            xp[i] = x0;
            dp[i] = 0.0;
            lp[i] = 0.0;
            xm[i] = x0;
            dm[i] = 0.0;
            lm[i] = 0.0;
        }
        double disc = 1.0;
        for (int64_t j = 0; j < n_blocks; j++) {
            philox_block(key, stream_base + (uint64_t)base, n, (uint32_t)j,
                         u1, u2);
            bm_normals(n, u1, u2, z1, z2);
            disc *= decay;
            band_step(n, xp, z1, sdt, c0, c1, lo, hi, disc, dp, lp);
            if (antithetic)
                band_step(n, xm, z1, -sdt, c0, c1, lo, hi, disc, dm, lm);
            if (2 * j + 1 < n_steps) {
                disc *= decay;
                band_step(n, xp, z2, sdt, c0, c1, lo, hi, disc, dp, lp);
                if (antithetic)
                    band_step(n, xm, z2, -sdt, c0, c1, lo, hi, disc, dm, lm);
            }
        }
        for (int64_t i = 0; i < n; i++) {
            int64_t o = (base + i) * legs;
            aD[o] = dp[i];
            aL[o] = lp[i];
            if (antithetic) {
                aD[o + 1] = dm[i];
                aL[o + 1] = lm[i];
            }
        }
    }
}

/* Weight floor below which a killed leg is treated as fully absorbed. */
#define W_FLOOR 1e-12

static double killed_leg(uint64_t key, uint64_t stream, double sgn,
                         int64_t n_steps, double x0, double c0, double c1,
                         double sdt, double sig2dt, double lo, double hi,
                         double pay_lo, double pay_hi, double rho_dt,
                         int reflect_low, double lo_reflect, double *resid)
{
    double inv_half_var = 2.0 / sig2dt;
    double decay = exp(-rho_dt);
    double x = x0, w = 1.0, disc = 1.0, val = 0.0;
    double z1 = 0.0, z2 = 0.0;
    for (int64_t k = 0; k < n_steps; k++) {
        if ((k & 1) == 0) {
            double u1, u2;
            philox_pair(key, stream, (uint32_t)(k >> 1), &u1, &u2);
            double rr = sqrt(-2.0 * log(u1));
            z1 = rr * cos(TWO_PI * u2);
            z2 = rr * sin(TWO_PI * u2);
        }
        double z = ((k & 1) == 0 ? z1 : z2) * sgn;
        double xx = c1 * x + c0 + sdt * z;
        double p_lo = 0.0, f_lo = 0.5;
        if (reflect_low) {
            if (xx < lo_reflect)
                xx = lo_reflect;
        } else {
            double gap_pre = x - lo, gap_post = xx - lo;
            if (gap_post <= 0.0) {
                p_lo = 1.0;
                f_lo = gap_pre / (gap_pre - gap_post + 1e-300);
            } else {
                double ex = -(gap_pre * gap_post) * inv_half_var;
                if (ex > -40.0)
                    p_lo = exp(ex);
            }
        }
        double p_hi = 0.0, f_hi = 0.5;
        {
            double gap_pre = hi - x, gap_post = hi - xx;
            if (gap_post <= 0.0) {
                p_hi = 1.0;
                f_hi = gap_pre / (gap_pre - gap_post + 1e-300);
            } else {
                double ex = -(gap_pre * gap_post) * inv_half_var;
                if (ex > -40.0)
                    p_hi = exp(ex);
            }
        }
        if (p_lo > 0.0)
            val += w * p_lo * pay_lo * disc * exp(-rho_dt * f_lo);
        if (p_hi > 0.0)
            val += w * (1.0 - p_lo) * p_hi * pay_hi * disc * exp(-rho_dt * f_hi);
        w *= (1.0 - p_lo) * (1.0 - p_hi);
        disc *= decay;
        if (w < W_FLOOR) {
            w = 0.0;
            break;
        }
        x = xx;
    }
    *resid = w * disc;
    return val;
}

void rb_killed_paths(uint64_t key, uint64_t stream_base, int64_t n_streams,
                     int antithetic, int64_t n_steps, double x0, double c0,
                     double c1, double sdt, double sig2dt, double lo,
                     double hi, double pay_lo, double pay_hi, double rho_dt,
                     int reflect_low, double lo_reflect, double *val,
                     double *resid)
{
    int64_t legs = antithetic ? 2 : 1;
    for (int64_t s = 0; s < n_streams; s++) {
        uint64_t stream = stream_base + (uint64_t)s;
        val[s * legs] = killed_leg(key, stream, 1.0, n_steps, x0, c0, c1, sdt,
                                   sig2dt, lo, hi, pay_lo, pay_hi, rho_dt,
                                   reflect_low, lo_reflect, &resid[s * legs]);
        if (antithetic)
            val[s * legs + 1] = killed_leg(key, stream, -1.0, n_steps, x0, c0,
                                           c1, sdt, sig2dt, lo, hi, pay_lo,
                                           pay_hi, rho_dt, reflect_low,
                                           lo_reflect, &resid[s * legs + 1]);
    }
}
