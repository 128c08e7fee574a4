"""Pure-numpy fused optimizer step.

This is the fallback for the compiled kernel in ``_cystep.pyx``.  The two
implementations perform the same floating-point operations in the same order
per coordinate, so for denominators built from +, *, /, sqrt, min/max they
produce bit-identical trajectories; softplus and power denominators may
differ by a few ulps (numpy's SIMD exp/log/pow vs libm).
"""

import numpy as np

from ..numerics import _softplus_raw

BACKEND = "python"

SECOND_NONE, SECOND_EMA, SECOND_AMS, SECOND_YOGI, SECOND_ADAGRAD = 0, 1, 2, 3, 4
CALIB_NONE, CALIB_EPS, CALIB_SOFTPLUS, CALIB_POWER, CALIB_CLIP = 0, 1, 2, 3, 4


def fused_step(x, m, v, vt, g, eta_t, beta1, beta2,
               momentum, second_kind, calib_kind,
               eps, beta, p, lo, hi, eta_ref,
               bias_corr, t_next):
    """Advance (x, m, v, vt) in place by one step; return True if x stayed finite."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _fused_step(x, m, v, vt, g, eta_t, beta1, beta2,
                           momentum, second_kind, calib_kind,
                           eps, beta, p, lo, hi, eta_ref, bias_corr, t_next)


def _fused_step(x, m, v, vt, g, eta_t, beta1, beta2,
                momentum, second_kind, calib_kind,
                eps, beta, p, lo, hi, eta_ref,
                bias_corr, t_next):
    omb1 = 1.0 - beta1
    omb2 = 1.0 - beta2

    if momentum:
        m *= beta1
        m += omb1 * g
    else:
        m[:] = g

    g2 = g * g
    if second_kind == SECOND_EMA:
        v *= beta2
        v += omb2 * g2
    elif second_kind == SECOND_AMS:
        vt *= beta2
        vt += omb2 * g2
        np.maximum(v, vt, out=v)
    elif second_kind == SECOND_YOGI:
        v -= (omb2 * np.sign(v - g2)) * g2
    elif second_kind == SECOND_ADAGRAD:
        v += g2

    if bias_corr:
        mh = m / (1.0 - beta1 ** t_next)
    else:
        mh = m

    if calib_kind == CALIB_NONE:
        upd = eta_t * mh
    else:
        vh = v / (1.0 - beta2 ** t_next) if bias_corr else v
        sv = np.sqrt(vh)
        if calib_kind == CALIB_EPS:
            denom = sv + eps
        elif calib_kind == CALIB_SOFTPLUS:
            denom = _softplus_raw(sv, beta)
        elif calib_kind == CALIB_POWER:
            denom = (sv * sv) ** p + eps
        else:
            lr = np.where(sv > 0.0, eta_ref / np.where(sv > 0.0, sv, 1.0), np.inf)
            lr = np.clip(lr, lo, hi)
            denom = eta_ref / lr
        upd = mh / denom
        upd *= eta_t

    x -= upd
    return bool(np.isfinite(x).all())
