"""Optimizer state machines built from first-moment rule x second-moment rule x calibrator.

Twelve named methods are registered:

    sgd         x -= eta * g
    smomentum   x -= eta * m                         (m = EMA of gradients)
    adagrad     accumulated v, eps-shift denominator (no first momentum)
    adam        EMA v, eps-shift
    amsgrad     maxed v, eps-shift
    yogi        signed-additive v, eps-shift
    padam       EMA v, power-p
    pamsgrad    maxed v, power-p
    adabound    EMA v, clipped rate
    amsbound    maxed v, clipped rate
    sadam       EMA v, softplus
    samsgrad    maxed v, softplus

Any other composition can be built with a hand-constructed ``Method`` (the
"custom" tag is an Adam-shaped method accepting any calibrator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .calibrators import Calibrator
from .calibrators import from_dict as calibrator_from_dict
from .calibrators import to_dict as calibrator_to_dict
from .errors import ConfigError, InputDomainError, PoisonedStateError
from .numerics import as_vector, check_same_length

SECOND_KINDS = {
    "none": K.SECOND_NONE,
    "ema": K.SECOND_EMA,
    "ams": K.SECOND_AMS,
    "yogi": K.SECOND_YOGI,
    "adagrad": K.SECOND_ADAGRAD,
}

_CALIB_CODES = {
    None: K.CALIB_NONE,
    "eps_shift": K.CALIB_EPS,
    "softplus": K.CALIB_SOFTPLUS,
    "power_p": K.CALIB_POWER,
    "clip": K.CALIB_CLIP,
}


@dataclass(frozen=True)
class Method:
    """How a step is assembled.

    ``calib`` is the calibrator kind this method requires: a kind name for
    the named adaptive methods, None for the uncalibrated ones (denominator
    1), or "any" to accept whatever calibrator the hyper-parameters carry.
    """

    name: str
    momentum: bool
    second: str
    calib: Optional[str]

    def __post_init__(self):
        if self.second not in SECOND_KINDS:
            raise ConfigError(f"unknown second-moment rule {self.second!r}")
        if self.calib not in (None, "any") and self.calib not in _CALIB_CODES:
            raise ConfigError(f"unknown calibrator kind {self.calib!r}")

    @property
    def uses_calibrator(self) -> bool:
        return self.calib is not None

    @property
    def ams_family(self) -> bool:
        return self.second == "ams"


METHODS = {
    "sgd": Method("sgd", momentum=False, second="none", calib=None),
    "smomentum": Method("smomentum", momentum=True, second="none", calib=None),
    "adagrad": Method("adagrad", momentum=False, second="adagrad", calib="eps_shift"),
    "adam": Method("adam", momentum=True, second="ema", calib="eps_shift"),
    "amsgrad": Method("amsgrad", momentum=True, second="ams", calib="eps_shift"),
    "yogi": Method("yogi", momentum=True, second="yogi", calib="eps_shift"),
    "padam": Method("padam", momentum=True, second="ema", calib="power_p"),
    "pamsgrad": Method("pamsgrad", momentum=True, second="ams", calib="power_p"),
    "adabound": Method("adabound", momentum=True, second="ema", calib="clip"),
    "amsbound": Method("amsbound", momentum=True, second="ams", calib="clip"),
    "sadam": Method("sadam", momentum=True, second="ema", calib="softplus"),
    "samsgrad": Method("samsgrad", momentum=True, second="ams", calib="softplus"),
    "custom": Method("custom", momentum=True, second="ema", calib="any"),
}


def resolve_method(method) -> Method:
    if isinstance(method, Method):
        return method
    try:
        return METHODS[method]
    except KeyError:
        raise ConfigError(
            f"unknown method tag {method!r}; known tags: {sorted(METHODS)}"
        ) from None


@dataclass(frozen=True)
class HyperParams:
    """Base rate, moment decays, calibrator, and the stage-wise decay schedule.

    ``decay`` is a tuple of (step, factor) pairs with strictly increasing
    1-based steps; once step t reaches a scheduled step the base rate is
    multiplied by that factor and stays multiplied thereafter.
    """

    eta: float
    beta1: float = 0.9
    beta2: float = 0.999
    calibrator: Optional[Calibrator] = None
    bias_correction: bool = False
    decay: tuple = ()

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0.0):
            raise ConfigError(f"eta must be finite and > 0, got {self.eta!r}")
        for name, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not (0.0 <= b < 1.0):
                raise ConfigError(f"{name} must lie in [0, 1), got {b!r}")
        decay = tuple((int(s), float(f)) for s, f in self.decay)
        object.__setattr__(self, "decay", decay)
        prev = 0
        for s, f in decay:
            if s <= prev:
                raise ConfigError("decay steps must be strictly increasing and >= 1")
            if not (0.0 < f <= 1.0):
                raise ConfigError(f"decay factors must lie in (0, 1], got {f!r}")
            prev = s

    def eta_at(self, t: int) -> float:
        """Effective base rate for 1-based step index ``t``."""
        eta = self.eta
        for s, f in self.decay:
            if s <= t:
                eta *= f
        return eta

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "calibrator": None if self.calibrator is None else calibrator_to_dict(self.calibrator),
            "bias_correction": self.bias_correction,
            "decay": [list(pair) for pair in self.decay],
        }

    @staticmethod
    def from_dict(d: dict) -> "HyperParams":
        d = dict(d)
        cal = d.get("calibrator")
        if cal is not None:
            d["calibrator"] = calibrator_from_dict(cal)
        d["decay"] = tuple(tuple(pair) for pair in d.get("decay", ()))
        return HyperParams(**d)


@dataclass
class OptimizerState:
    """Mutable per-run state: iterate, moments, and the step counter."""

    method: Method
    x: np.ndarray
    m: np.ndarray
    v: np.ndarray
    v_tilde: np.ndarray
    t: int = 0
    _codes: tuple = field(default=(1, 0, 0), repr=False)

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    def to_dict(self) -> dict:
        return {
            "method": self.method.name,
            "x": self.x.tolist(),
            "m": self.m.tolist(),
            "v": self.v.tolist(),
            "v_tilde": self.v_tilde.tolist(),
            "t": self.t,
        }


def state_from_dict(d: dict, hp: HyperParams) -> OptimizerState:
    """Rebuild a checkpointed state. The method tag must be a registered name."""
    state = init(d["method"], len(d["x"]), d["x"], hp)
    state.x[:] = np.asarray(d["x"], dtype=np.float64)
    state.m[:] = np.asarray(d["m"], dtype=np.float64)
    state.v[:] = np.asarray(d["v"], dtype=np.float64)
    state.v_tilde[:] = np.asarray(d["v_tilde"], dtype=np.float64)
    state.t = int(d["t"])
    return state


def _validate_pairing(method: Method, hp: HyperParams) -> int:
    """Return the calibrator kernel code, checking the method/calibrator pairing."""
    if method.calib is None:
        if hp.calibrator is not None:
            raise ConfigError(
                f"method {method.name!r} takes no calibrator, but one was supplied"
            )
        return K.CALIB_NONE
    if hp.calibrator is None:
        raise ConfigError(f"method {method.name!r} requires a calibrator")
    if method.calib != "any" and hp.calibrator.kind != method.calib:
        raise ConfigError(
            f"method {method.name!r} requires a {method.calib!r} calibrator, "
            f"got {hp.calibrator.kind!r}"
        )
    return _CALIB_CODES[hp.calibrator.kind]


def init(method, dim: int, x0, hp: HyperParams) -> OptimizerState:
    """Fresh state with zero moments at iterate x0."""
    method = resolve_method(method)
    if dim < 1:
        raise ConfigError(f"dimension must be >= 1, got {dim}")
    x0 = as_vector(x0, "x0")
    if x0.shape[0] != dim:
        raise InputDomainError(f"x0 has length {x0.shape[0]}, expected {dim}")
    calib_code = _validate_pairing(method, hp)
    codes = (int(method.momentum), SECOND_KINDS[method.second], calib_code)
    return OptimizerState(
        method=method,
        x=np.ascontiguousarray(x0, dtype=np.float64).copy(),
        m=np.zeros(dim),
        v=np.zeros(dim),
        v_tilde=np.zeros(dim),
        t=0,
        _codes=codes,
    )


def first_moment(m_prev, g, beta1: float) -> np.ndarray:
    """Convex combination beta1*m_prev + (1-beta1)*g."""
    m_prev = as_vector(m_prev, "m_prev")
    g = as_vector(g, "g")
    check_same_length(m_prev, g)
    if not (0.0 <= beta1 < 1.0):
        raise ConfigError(f"beta1 must lie in [0, 1), got {beta1!r}")
    return beta1 * m_prev + (1.0 - beta1) * g


def second_moment(kind: str, v_prev, v_tilde_prev, g, beta2: float):
    """One second-moment update; returns (v, v_tilde).

    ema      v = beta2*v_prev + (1-beta2)*g^2
    ams      vt = beta2*vt_prev + (1-beta2)*g^2;  v = max(v_prev, vt)
    yogi     v = v_prev - (1-beta2)*sign(v_prev - g^2)*g^2   (sign(0) = 0)
    adagrad  v = v_prev + g^2
    none     v unchanged
    """
    if kind not in SECOND_KINDS:
        raise ConfigError(f"unknown second-moment rule {kind!r}")
    v_prev = as_vector(v_prev, "v_prev")
    vt_prev = as_vector(v_tilde_prev, "v_tilde_prev")
    g = as_vector(g, "g")
    check_same_length(v_prev, g)
    check_same_length(vt_prev, g)
    if (v_prev < 0.0).any():
        raise InputDomainError("v_prev must be coordinatewise >= 0")
    if not (0.0 <= beta2 < 1.0):
        raise ConfigError(f"beta2 must lie in [0, 1), got {beta2!r}")
    g2 = g * g
    omb2 = 1.0 - beta2
    if kind == "none":
        return v_prev.copy(), vt_prev.copy()
    if kind == "ema":
        return beta2 * v_prev + omb2 * g2, vt_prev.copy()
    if kind == "ams":
        vt = beta2 * vt_prev + omb2 * g2
        return np.maximum(v_prev, vt), vt
    if kind == "yogi":
        return v_prev - (omb2 * np.sign(v_prev - g2)) * g2, vt_prev.copy()
    return v_prev + g2, vt_prev.copy()


def step(state: OptimizerState, g, hp: HyperParams) -> OptimizerState:
    """Advance the state by one step in place and return it.

    A non-finite gradient raises PoisonedStateError before anything is
    touched.  If the updated iterate itself goes non-finite (divergence or a
    degenerate zero denominator), PoisonedStateError is raised after the
    state has advanced; runs should treat the state as dead either way.
    """
    g = np.ascontiguousarray(g, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] != state.dim:
        raise InputDomainError(
            f"gradient has shape {g.shape}, expected ({state.dim},)"
        )
    if not np.isfinite(g).all():
        raise PoisonedStateError(f"non-finite gradient at step {state.t + 1}")

    t_next = state.t + 1
    eta_t = hp.eta_at(t_next)
    cal = hp.calibrator
    eps = beta = p = lo = hi = eta_ref = 0.0
    if cal is not None:
        cal = cal.at_step(t_next)
        eps, beta, p = cal.epsilon, cal.beta, cal.p
        lo, hi, eta_ref = cal.eta_lower, cal.eta_upper, cal.eta_ref

    momentum, second_code, calib_code = state._codes
    ok = K.fused_step(
        state.x, state.m, state.v, state.v_tilde, g,
        eta_t, hp.beta1, hp.beta2,
        momentum, second_code, calib_code,
        eps, beta, p, lo, hi, eta_ref,
        int(hp.bias_correction), t_next,
    )
    state.t = t_next
    if not ok:
        raise PoisonedStateError(f"non-finite iterate after step {t_next}")
    return state


def default_hyperparams(method, eta: float, **overrides) -> HyperParams:
    """Canonical hyper-parameters for a named method at base rate ``eta``.

    Per-method conventions: adam/amsgrad/adagrad/padam/pamsgrad use
    epsilon 1e-8, yogi uses 1e-3, sadam/samsgrad use softplus beta 50,
    padam/pamsgrad use p = 1/8, and the bound methods clip the rate into
    [eta/10, 10*eta] around the reference rate.  Keyword overrides:
    beta1, beta2, bias_correction, decay, epsilon, beta, p, eta_lower,
    eta_upper, eta_ref, calibrator.
    """
    method = resolve_method(method)
    hp_kwargs = {
        k: overrides.pop(k)
        for k in ("beta1", "beta2", "bias_correction", "decay")
        if k in overrides
    }
    calibrator = overrides.pop("calibrator", None)
    if calibrator is None and method.uses_calibrator:
        kind = method.calib if method.calib != "any" else "eps_shift"
        if kind == "eps_shift":
            calibrator = Calibrator("eps_shift", epsilon=overrides.pop("epsilon", 1e-3 if method.name == "yogi" else 1e-8))
        elif kind == "softplus":
            calibrator = Calibrator("softplus", beta=overrides.pop("beta", 50.0))
        elif kind == "power_p":
            calibrator = Calibrator(
                "power_p",
                epsilon=overrides.pop("epsilon", 1e-8),
                p=overrides.pop("p", 0.125),
            )
        else:
            eta_ref = overrides.pop("eta_ref", eta)
            calibrator = Calibrator(
                "clip",
                eta_lower=overrides.pop("eta_lower", eta_ref / 10.0),
                eta_upper=overrides.pop("eta_upper", eta_ref * 10.0),
                eta_ref=eta_ref,
            )
    if overrides:
        raise ConfigError(f"unused hyper-parameter overrides: {sorted(overrides)}")
    return HyperParams(eta=eta, calibrator=calibrator, **hp_kwargs)
