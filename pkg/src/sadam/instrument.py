"""Per-iteration recording: adaptive-rate statistics, auxiliary-sequence
residuals, rate-bound violation counts, and the trace file format.

Trace CSV header (missing optional fields are empty cells):

    t,loss,grad_norm_sq,eta_t,alr_min,alr_p25,alr_median,alr_p75,alr_max,z_residual

A JSON sidecar carries run metadata plus final metrics; together the two
files regenerate byte-identically from the same config and seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calibrators import ALRBounds, denominator
from .errors import ConfigError, InputDomainError
from .numerics import five_number_summary
from .optim import HyperParams, OptimizerState

TRACE_HEADER = [
    "t", "loss", "grad_norm_sq", "eta_t",
    "alr_min", "alr_p25", "alr_median", "alr_p75", "alr_max", "z_residual",
]


@dataclass(frozen=True)
class ALRSnapshot:
    """Five nearest-rank order statistics of the adaptive-rate vector at one step."""

    t: int
    min: float
    p25: float
    median: float
    p75: float
    max: float

    def __post_init__(self):
        if not (self.min <= self.p25 <= self.median <= self.p75 <= self.max):
            raise InputDomainError("snapshot statistics must be nondecreasing")


def snapshot_alr(state: OptimizerState, hp: HyperParams) -> ALRSnapshot:
    """Distribution statistics of 1/denominator(sqrt(v_t)) across coordinates.

    Uses the raw second momentum, i.e. the rate the (bias-correction-free)
    step actually applied; requires at least one completed step.
    """
    if state.t < 1:
        raise InputDomainError("no moments recorded yet: snapshot needs t >= 1")
    if hp.calibrator is None:
        alr = np.ones(state.dim)
    else:
        alr = 1.0 / denominator(hp.calibrator.at_step(state.t), np.sqrt(state.v))
    lo, p25, med, p75, hi = five_number_summary(alr)
    return ALRSnapshot(t=state.t, min=lo, p25=p25, median=med, p75=p75, max=hi)


def z_residual(x_prev, x_t, x_next, m_prev, v_prev, v_t, g_t, hp: HyperParams) -> float:
    """Relative defect of the auxiliary-sequence one-step identity.

    With z_t = x_t + (beta1/(1-beta1)) * (x_t - x_{t-1}) and D(v) the
    calibrated denominator, a constant-rate trajectory must satisfy

        z_{t+1} - z_t = eta*c*(1/D(v_{t-1}) - 1/D(v_t)) (.) m_{t-1}
                        - eta*(1/D(v_t)) (.) g_t,       c = beta1/(1-beta1).

    Returns ||defect|| / max(1, ||z_t||).  Bias correction and rate decay
    change the step and void the identity, so both are rejected.
    """
    if hp.bias_correction:
        raise ConfigError("the auxiliary-sequence identity assumes no bias correction")
    if hp.decay:
        raise ConfigError("the auxiliary-sequence identity assumes a constant base rate")
    x_prev = np.asarray(x_prev, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    x_next = np.asarray(x_next, dtype=np.float64)
    m_prev = np.asarray(m_prev, dtype=np.float64)
    g_t = np.asarray(g_t, dtype=np.float64)
    c = hp.beta1 / (1.0 - hp.beta1)
    if hp.calibrator is None:
        inv_prev = np.ones_like(x_t)
        inv_t = np.ones_like(x_t)
    else:
        inv_prev = 1.0 / denominator(hp.calibrator, np.sqrt(np.asarray(v_prev, dtype=np.float64)))
        inv_t = 1.0 / denominator(hp.calibrator, np.sqrt(np.asarray(v_t, dtype=np.float64)))
    z_t = x_t + c * (x_t - x_prev)
    z_next = x_next + c * (x_next - x_t)
    rhs = hp.eta * c * (inv_prev - inv_t) * m_prev - hp.eta * inv_t * g_t
    defect = z_next - z_t - rhs
    return float(np.linalg.norm(defect) / max(1.0, np.linalg.norm(z_t)))


@dataclass
class TrajectoryRecord:
    """Everything one run produces: per-step series, snapshots, final metrics."""

    method: str
    hyper: dict
    problem: dict
    oracle: dict
    seed: int
    snapshot_every: int
    kernel_backend: str
    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)
    eta_ts: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)       # t -> ALRSnapshot
    z_residuals: dict = field(default_factory=dict)     # t -> float
    final_x: Optional[list] = None
    final_state: Optional[dict] = None
    final_loss: Optional[float] = None
    final_gap: Optional[float] = None
    avg_iterate_gap: Optional[float] = None
    min_grad_norm_sq: Optional[float] = None
    test_accuracy: Optional[float] = None
    clip_count: int = 0
    diverged: bool = False
    abort_step: Optional[int] = None

    def metadata(self) -> dict:
        return {
            "method": self.method,
            "hyper": self.hyper,
            "problem": self.problem,
            "oracle": self.oracle,
            "seed": self.seed,
            "snapshot_every": self.snapshot_every,
            "kernel_backend": self.kernel_backend,
            "final_loss": self.final_loss,
            "final_gap": self.final_gap,
            "avg_iterate_gap": self.avg_iterate_gap,
            "min_grad_norm_sq": self.min_grad_norm_sq,
            "test_accuracy": self.test_accuracy,
            "clip_count": self.clip_count,
            "diverged": self.diverged,
            "abort_step": self.abort_step,
            "final_x": self.final_x,
            "final_state": self.final_state,
        }


def bound_violations(record: TrajectoryRecord, bounds: ALRBounds) -> int:
    """Count snapshots whose extremes escape [mu_lower, mu_upper].

    A relative tolerance of 1e-12 absorbs rounding in the snapshot path.
    """
    if not record.snapshots:
        raise InputDomainError("trajectory carries no adaptive-rate snapshots")
    lo = bounds.mu_lower * (1.0 - 1e-12)
    hi = bounds.mu_upper * (1.0 + 1e-12)
    return sum(1 for s in record.snapshots.values() if s.min < lo or s.max > hi)


def _cell(value) -> str:
    return "" if value is None else repr(float(value))


def write_trace_csv(record: TrajectoryRecord, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_HEADER)
        for i, t in enumerate(record.steps):
            snap = record.snapshots.get(t)
            zres = record.z_residuals.get(t)
            row = [
                str(t),
                _cell(record.losses[i]),
                _cell(record.grad_norm_sq[i]),
                _cell(record.eta_ts[i]),
            ]
            if snap is None:
                row += ["", "", "", "", ""]
            else:
                row += [_cell(v) for v in (snap.min, snap.p25, snap.median, snap.p75, snap.max)]
            row.append(_cell(zres))
            writer.writerow(row)


def write_summary_json(record: TrajectoryRecord, path) -> None:
    with open(path, "w") as f:
        json.dump(record.metadata(), f, indent=2, sort_keys=True)
        f.write("\n")


def read_trace_csv(path) -> list[dict]:
    """Parse a trace file back into row dicts (floats; None for empty cells)."""
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != TRACE_HEADER:
            raise InputDomainError(f"unexpected trace header: {reader.fieldnames}")
        for raw in reader:
            row = {"t": int(raw["t"])}
            for key in TRACE_HEADER[1:]:
                row[key] = float(raw[key]) if raw[key] != "" else None
            rows.append(row)
    return rows


def anisotropy_ratio(snapshot: ALRSnapshot) -> float:
    """max/min of the adaptive-rate vector at one step."""
    if snapshot.min <= 0.0:
        return math.inf
    return snapshot.max / snapshot.min
