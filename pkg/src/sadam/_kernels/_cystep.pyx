# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused optimizer step.

Mirrors pyloop.fused_step operation-for-operation; see that module for the
cross-backend agreement contract.  Built with -ffp-contract=off so the
per-coordinate rounding sequence matches the numpy fallback.
"""

from libc.math cimport exp, isfinite, log1p, pow, sqrt

BACKEND = "compiled"

DEF SOFTPLUS_SWITCH = 30.0


cdef inline double _softplus(double x, double beta) noexcept nogil:
    cdef double bx = beta * x
    if bx > SOFTPLUS_SWITCH:
        return x + log1p(exp(-bx)) / beta
    return log1p(exp(bx)) / beta


cdef inline double _sign(double a) noexcept nogil:
    if a > 0.0:
        return 1.0
    if a < 0.0:
        return -1.0
    return 0.0


def fused_step(double[::1] x, double[::1] m, double[::1] v, double[::1] vt,
               double[::1] g, double eta_t, double beta1, double beta2,
               int momentum, int second_kind, int calib_kind,
               double eps, double beta, double p,
               double lo, double hi, double eta_ref,
               int bias_corr, long t_next):
    """Advance (x, m, v, vt) in place by one step; return True if x stayed finite."""
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t i
    cdef double omb1 = 1.0 - beta1
    cdef double omb2 = 1.0 - beta2
    cdef double bc1 = 1.0
    cdef double bc2 = 1.0
    cdef double gi, g2, mh, vh, sv, denom, lr, upd
    cdef bint ok = True

    if bias_corr:
        bc1 = 1.0 - pow(beta1, <double> t_next)
        bc2 = 1.0 - pow(beta2, <double> t_next)

    with nogil:
        for i in range(d):
            gi = g[i]
            if momentum:
                m[i] = beta1 * m[i] + omb1 * gi
            else:
                m[i] = gi

            g2 = gi * gi
            if second_kind == 1:      # exponential moving average
                v[i] = beta2 * v[i] + omb2 * g2
            elif second_kind == 2:    # max of the moving average so far
                vt[i] = beta2 * vt[i] + omb2 * g2
                if vt[i] > v[i]:
                    v[i] = vt[i]
            elif second_kind == 3:    # signed additive update
                v[i] = v[i] - (omb2 * _sign(v[i] - g2)) * g2
            elif second_kind == 4:    # plain accumulation
                v[i] = v[i] + g2

            mh = m[i]
            if bias_corr:
                mh = mh / bc1

            if calib_kind == 0:
                upd = eta_t * mh
            else:
                vh = v[i]
                if bias_corr:
                    vh = vh / bc2
                sv = sqrt(vh)
                if calib_kind == 1:
                    denom = sv + eps
                elif calib_kind == 2:
                    denom = _softplus(sv, beta)
                elif calib_kind == 3:
                    denom = pow(sv * sv, p) + eps
                else:
                    if sv > 0.0:
                        lr = eta_ref / sv
                        if lr < lo:
                            lr = lo
                        elif lr > hi:
                            lr = hi
                    else:
                        lr = hi
                    denom = eta_ref / lr
                upd = mh / denom
                upd = upd * eta_t

            x[i] = x[i] - upd
            if not isfinite(x[i]):
                ok = False

    return bool(ok)
