"""Denominator rules that turn sqrt(v_t) into the adaptive learning rate.

A calibrator maps the elementwise square root of the second momentum to the
denominator of the per-coordinate learning rate:

    eps_shift   sqrt(v) + epsilon
    softplus    softplus(sqrt(v); beta)
    power_p     v**p + epsilon            (p in (0, 1/2]; p = 1/2 is eps_shift)
    clip        eta_ref / clip(eta_ref/sqrt(v), eta_lower, eta_upper)

Each rule comes with closed-form lower/upper bounds on the adaptive rate
1/denominator, valid whenever the gradient oracle keeps ||g|| <= G with
noise scale sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, InputDomainError, UnboundedALRError
from .numerics import LOG2, _softplus_raw, as_vector, softplus_stable

KINDS = ("eps_shift", "softplus", "power_p", "clip")


@dataclass(frozen=True)
class Calibrator:
    """A named denominator rule plus its parameters.

    Only the parameters of the active ``kind`` are meaningful; the rest are
    ignored.  ``epsilon = 0`` is permitted for eps_shift/power_p so that the
    degenerate (uncalibrated) rules remain expressible, but ``alr_bounds``
    refuses to produce bounds for them.

    ``schedule``, when set on a clip calibrator, maps a 1-based step index to
    a ``(eta_lower, eta_upper)`` pair and overrides the fixed interval at
    that step.  It is an in-process hook only and is not serialized.
    """

    kind: str
    epsilon: float = 0.0
    beta: float = 50.0
    p: float = 0.5
    eta_lower: float = 0.0
    eta_upper: float = 0.0
    eta_ref: float = 0.0
    schedule: Optional[Callable[[int], tuple[float, float]]] = field(
        default=None, compare=False
    )

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown calibrator kind {self.kind!r}, expected one of {KINDS}")
        if self.kind in ("eps_shift", "power_p"):
            if not (math.isfinite(self.epsilon) and self.epsilon >= 0.0):
                raise ConfigError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")
        if self.kind == "softplus":
            if not (math.isfinite(self.beta) and self.beta > 0.0):
                raise ConfigError(f"softplus beta must be > 0, got {self.beta!r}")
        if self.kind == "power_p":
            if not (0.0 < self.p <= 0.5):
                raise ConfigError(f"power exponent p must lie in (0, 1/2], got {self.p!r}")
        if self.kind == "clip":
            if not (0.0 <= self.eta_lower <= self.eta_upper):
                raise ConfigError(
                    f"clip interval requires 0 <= eta_lower <= eta_upper, got "
                    f"[{self.eta_lower!r}, {self.eta_upper!r}]"
                )
            if not (math.isfinite(self.eta_ref) and self.eta_ref > 0.0):
                raise ConfigError(f"clip needs a positive reference base rate, got {self.eta_ref!r}")

    def at_step(self, t: int) -> "Calibrator":
        """Resolve the clip schedule hook (if any) for step ``t``."""
        if self.kind != "clip" or self.schedule is None:
            return self
        lo, hi = self.schedule(t)
        return replace(self, eta_lower=float(lo), eta_upper=float(hi), schedule=None)


@dataclass(frozen=True)
class ALRBounds:
    """Closed-form bounds mu_lower <= 1/denominator <= mu_upper."""

    mu_lower: float
    mu_upper: float

    def __post_init__(self):
        if not (0.0 < self.mu_lower <= self.mu_upper):
            raise ConfigError(
                f"bounds require 0 < mu_lower <= mu_upper, got ({self.mu_lower!r}, {self.mu_upper!r})"
            )


def denominator(c: Calibrator, sqrt_v) -> np.ndarray:
    """Apply the calibrator's denominator rule coordinatewise to sqrt(v).

    The caller passes sqrt(v); power_p squares internally to recover v.
    Output coordinates are strictly positive for every non-degenerate
    configuration (the single exception: eps_shift/power_p with epsilon = 0
    map a zero coordinate to zero).
    """
    sv = as_vector(sqrt_v, "sqrt_v")
    if (sv < 0.0).any():
        raise InputDomainError("sqrt_v must be coordinatewise >= 0")
    if c.kind == "eps_shift":
        return sv + c.epsilon
    if c.kind == "softplus":
        return _softplus_raw(sv, c.beta)
    if c.kind == "power_p":
        return (sv * sv) ** c.p + c.epsilon
    # clip: coordinates with sqrt(v) = 0 take the upper rate bound
    with np.errstate(divide="ignore"):
        raw = np.where(sv > 0.0, c.eta_ref / np.where(sv > 0.0, sv, 1.0), np.inf)
    clipped = np.clip(raw, c.eta_lower, c.eta_upper)
    return c.eta_ref / clipped


def alr_bounds(c: Calibrator, G: float, sigma: float) -> ALRBounds:
    """Bounds on the adaptive rate when sqrt(v) stays within [0, sqrt(sigma^2+G^2)].

    Raises UnboundedALRError when the rule has no finite/positive bound
    (eps_shift or power_p with epsilon = 0; clip with a zero lower rate), so
    callers can never fuzz against a vacuous interval.
    """
    if not (math.isfinite(G) and G > 0.0):
        raise InputDomainError(f"G must be finite and > 0, got {G!r}")
    if not (math.isfinite(sigma) and sigma >= 0.0):
        raise InputDomainError(f"sigma must be finite and >= 0, got {sigma!r}")
    cap = math.sqrt(sigma * sigma + G * G)
    if c.kind == "eps_shift":
        if c.epsilon == 0.0:
            raise UnboundedALRError("eps_shift with epsilon = 0 has no upper rate bound")
        return ALRBounds(1.0 / (cap + c.epsilon), 1.0 / c.epsilon)
    if c.kind == "softplus":
        return ALRBounds(1.0 / softplus_stable(cap, c.beta), c.beta / LOG2)
    if c.kind == "power_p":
        if c.epsilon == 0.0:
            raise UnboundedALRError("power_p with epsilon = 0 has no upper rate bound")
        return ALRBounds(1.0 / ((sigma * sigma + G * G) ** c.p + c.epsilon), 1.0 / c.epsilon)
    if c.eta_lower == 0.0:
        raise UnboundedALRError("clip with eta_lower = 0 has no positive lower rate bound")
    return ALRBounds(c.eta_lower / c.eta_ref, c.eta_upper / c.eta_ref)


def to_dict(c: Calibrator) -> dict:
    """Serialize for the harness config format.  The schedule hook is dropped."""
    return {
        "kind": c.kind,
        "epsilon": c.epsilon,
        "beta": c.beta,
        "p": c.p,
        "eta_lower": c.eta_lower,
        "eta_upper": c.eta_upper,
        "eta_ref": c.eta_ref,
    }


def from_dict(d: dict) -> Calibrator:
    unknown = set(d) - {"kind", "epsilon", "beta", "p", "eta_lower", "eta_upper", "eta_ref"}
    if unknown:
        raise ConfigError(f"unknown calibrator fields: {sorted(unknown)}")
    if "kind" not in d:
        raise ConfigError("calibrator dict needs a 'kind' field")
    return Calibrator(**d)
