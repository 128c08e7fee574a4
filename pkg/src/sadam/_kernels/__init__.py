"""Kernel backend selection.

The compiled extension is preferred when it imports; the numpy fallback is
always available.  Set SADAM_KERNELS=py to force the fallback or
SADAM_KERNELS=c to insist on the compiled kernel (ImportError if missing).
"""

import os

from . import pyloop

_requested = os.environ.get("SADAM_KERNELS", "").strip().lower()
if _requested not in ("", "c", "py"):
    raise ImportError(f"SADAM_KERNELS must be 'c' or 'py', got {_requested!r}")

if _requested == "py":
    _impl = pyloop
else:
    try:
        from . import _cystep as _impl
    except ImportError:
        if _requested == "c":
            raise
        _impl = pyloop

fused_step = _impl.fused_step
BACKEND = _impl.BACKEND

SECOND_NONE = pyloop.SECOND_NONE
SECOND_EMA = pyloop.SECOND_EMA
SECOND_AMS = pyloop.SECOND_AMS
SECOND_YOGI = pyloop.SECOND_YOGI
SECOND_ADAGRAD = pyloop.SECOND_ADAGRAD
CALIB_NONE = pyloop.CALIB_NONE
CALIB_EPS = pyloop.CALIB_EPS
CALIB_SOFTPLUS = pyloop.CALIB_SOFTPLUS
CALIB_POWER = pyloop.CALIB_POWER
CALIB_CLIP = pyloop.CALIB_CLIP
