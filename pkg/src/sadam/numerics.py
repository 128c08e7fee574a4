"""Shared elementwise kernels and small numerical utilities.

Vectors throughout the package are plain 1-D float64 numpy arrays.  Every
public operation here validates that inputs are finite; elementwise algebra
itself is delegated to numpy.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, InputDomainError

LOG2 = math.log(2.0)

# Branch switch for the overflow-safe softplus.  Both branches agree to
# better than 1e-13 relative at the threshold.
_SOFTPLUS_SWITCH = 30.0


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 array, validating as we go."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InputDomainError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputDomainError(f"{name} contains non-finite values")
    return arr


def check_same_length(a: np.ndarray, b: np.ndarray, what: str = "vectors") -> None:
    if a.shape[0] != b.shape[0]:
        raise InputDomainError(
            f"{what} must have equal lengths, got {a.shape[0]} and {b.shape[0]}"
        )


def _softplus_raw(x: np.ndarray, beta: float) -> np.ndarray:
    """Unvalidated array softplus (1/beta)*log(1+exp(beta*x)) for x >= 0.

    For large arguments the direct formula overflows, so we switch to
    x + log1p(exp(-beta*x))/beta, which keeps x itself exact.
    """
    bx = beta * x
    out = np.empty_like(x)
    hi = bx > _SOFTPLUS_SWITCH
    lo = ~hi
    out[hi] = x[hi] + np.log1p(np.exp(-bx[hi])) / beta
    out[lo] = np.log1p(np.exp(bx[lo])) / beta
    return out


def softplus_stable(x, beta: float):
    """Overflow-safe softplus (1/beta)*log(1 + e^(beta*x)) for nonnegative x.

    Accepts a scalar or a 1-D array and returns the matching type.  The
    result is always >= log(2)/beta, is strictly increasing in x, and for
    beta*x >= ~40 is indistinguishable from x in float64.

    Raises InputDomainError for negative or non-finite x and ConfigError for
    beta <= 0.
    """
    if not (isinstance(beta, (int, float)) and math.isfinite(beta) and beta > 0):
        raise ConfigError(f"softplus beta must be a positive finite real, got {beta!r}")
    beta = float(beta)
    if np.isscalar(x) or getattr(x, "ndim", None) == 0:
        xf = float(x)
        if not math.isfinite(xf) or xf < 0.0:
            raise InputDomainError(f"softplus argument must be finite and >= 0, got {xf!r}")
        bx = beta * xf
        if bx > _SOFTPLUS_SWITCH:
            return xf + math.log1p(math.exp(-bx)) / beta
        return math.log1p(math.exp(bx)) / beta
    arr = as_vector(x, "softplus argument")
    if (arr < 0.0).any():
        raise InputDomainError("softplus argument must be coordinatewise >= 0")
    return _softplus_raw(arr, beta)


def percentile_nearest_rank(v, q: float) -> float:
    """Nearest-rank percentile: the element at rank ceil(q/100 * d), 1-based.

    q = 0 maps to rank 1 (the minimum), q = 100 to rank d (the maximum).
    The input is copied and sorted; the original order never matters.
    """
    arr = as_vector(v, "percentile input")
    d = arr.shape[0]
    if d == 0:
        raise InputDomainError("percentile of an empty vector is undefined")
    if not (isinstance(q, (int, float)) and math.isfinite(q) and 0.0 <= q <= 100.0):
        raise InputDomainError(f"percentile q must lie in [0, 100], got {q!r}")
    rank = max(1, math.ceil(q * d / 100.0))
    return float(np.sort(arr)[rank - 1])


def five_number_summary(v) -> tuple[float, float, float, float, float]:
    """(min, p25, median, p75, max) by the nearest-rank rule, in one sort."""
    arr = as_vector(v, "summary input")
    d = arr.shape[0]
    if d == 0:
        raise InputDomainError("summary of an empty vector is undefined")
    s = np.sort(arr)
    ranks = [max(1, math.ceil(q * d / 100.0)) for q in (0.0, 25.0, 50.0, 75.0, 100.0)]
    return tuple(float(s[r - 1]) for r in ranks)


def loglog_slope(ts, ys) -> float:
    """Least-squares slope of log(ys) against log(ts).

    Both sequences must be strictly positive and of equal length >= 2.
    """
    t = as_vector(ts, "ts")
    y = as_vector(ys, "ys")
    check_same_length(t, y, "slope inputs")
    if t.shape[0] < 2:
        raise InputDomainError("slope fit needs at least two points")
    if (t <= 0.0).any() or (y <= 0.0).any():
        raise InputDomainError("slope fit requires strictly positive entries")
    lt = np.log(t)
    ly = np.log(y)
    lt_c = lt - lt.mean()
    denom = float(np.dot(lt_c, lt_c))
    if denom == 0.0:
        raise InputDomainError("slope fit requires at least two distinct ts")
    return float(np.dot(lt_c, ly - ly.mean()) / denom)
