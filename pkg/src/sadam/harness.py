"""Experiment runner: single runs, grid search, method comparisons, and
rate-scaling studies over a grid of iteration budgets.

Everything is driven by ExperimentConfig, a JSON-serializable description of
(problem, oracle, method, hyper-parameters, budget).  Replicates differ only
in the oracle seed; the starting point is a function of the config alone, so
noise-free replicates coincide and reruns regenerate outputs byte for byte.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from . import optim
from .calibrators import from_dict as calibrator_from_dict
from .data import gen_blobs, read_idx
from .errors import ConfigError, DivergedRunError, PoisonedStateError, UnsupportedQueryError
from .instrument import (
    TrajectoryRecord,
    snapshot_alr,
    write_summary_json,
    write_trace_csv,
    z_residual,
)
from .numerics import loglog_slope
from .problems import MLP, Logistic, Oracle, Problem, Quadratic, Rosenbrock

METRICS = ("final_loss", "final_gap", "avg_iterate_gap", "min_grad_norm_sq", "test_accuracy")
ETA_RULES = ("const_over_sqrtT", "const_over_T", "const_over_Tsq", "fixed")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: dict
    method: str
    eta: float
    iters: int
    seed: int = 0
    oracle: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)
    replicates: int = 1
    snapshot_every: int = 1
    record_z_residual: bool = False
    x0: tuple | None = None
    x0_seed: int = 0
    x0_scale: float | None = None
    metric: str = "final_loss"
    out_dir: str | None = None

    def __post_init__(self):
        if self.iters < 1:
            raise ConfigError(f"iters must be >= 1, got {self.iters}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if self.snapshot_every < 1:
            raise ConfigError(f"snapshot_every must be >= 1, got {self.snapshot_every}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}, expected one of {METRICS}")
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["x0"] is not None:
            d["x0"] = list(d["x0"])
        return d

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "x0" in d and d["x0"] is not None:
            d["x0"] = tuple(d["x0"])
        return ExperimentConfig(**d)


def build_dataset(spec: dict):
    spec = dict(spec)
    generator = spec.pop("generator", "blobs")
    if generator == "blobs":
        return gen_blobs(
            n=spec.pop("n", 200),
            d_in=spec.pop("d_in", 2),
            classes=spec.pop("classes", 2),
            spread=spec.pop("spread", 0.1),
            seed=spec.pop("seed", 0),
        )
    if generator == "idx":
        return read_idx(
            spec.pop("images"), spec.pop("labels"),
            per_class=spec.pop("per_class", None), seed=spec.pop("seed", 0),
        )
    raise ConfigError(f"unknown dataset generator {generator!r}")


def build_problem(spec: dict) -> Problem:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "quadratic":
        if "spectrum" in spec:
            spectrum = spec.pop("spectrum")
        else:
            dim = spec.pop("dim", 10)
            lo = spec.pop("log10_min", -2.0)
            hi = spec.pop("log10_max", 0.0)
            spectrum = np.logspace(lo, hi, dim)
        problem = Quadratic(spectrum)
    elif kind == "rosenbrock":
        problem = Rosenbrock(dim=spec.pop("dim", 2))
    elif kind == "logistic":
        problem = Logistic(
            build_dataset(spec.pop("dataset", {})),
            l2=spec.pop("l2", 0.0),
            fstar_cache=spec.pop("fstar_cache", None),
        )
    elif kind == "mlp":
        problem = MLP(build_dataset(spec.pop("dataset", {})), hidden=spec.pop("hidden", 8))
    else:
        raise ConfigError(f"unknown problem kind {kind!r}")
    if spec:
        raise ConfigError(f"unused problem fields: {sorted(spec)}")
    return problem


def build_oracle(problem: Problem, config: ExperimentConfig, replicate: int) -> Oracle:
    spec = dict(config.oracle)
    base_seed = spec.pop("seed", config.seed)
    G = spec.pop("G", None)
    return Oracle(
        problem,
        G=math.inf if G is None else G,
        sigma=spec.pop("sigma", 0.0),
        seed=base_seed + replicate,
        mode=spec.pop("mode", "noise"),
        batch_size=spec.pop("batch_size", None),
    )


def build_hyperparams(config: ExperimentConfig) -> optim.HyperParams:
    overrides = dict(config.hyper)
    if "calibrator" in overrides and isinstance(overrides["calibrator"], dict):
        overrides["calibrator"] = calibrator_from_dict(overrides["calibrator"])
    if "decay" in overrides:
        overrides["decay"] = tuple(tuple(pair) for pair in overrides["decay"])
    return optim.default_hyperparams(config.method, config.eta, **overrides)


def initial_point(problem: Problem, config: ExperimentConfig) -> np.ndarray:
    """Deterministic starting iterate; replicates share it by construction."""
    if config.x0 is not None:
        return np.asarray(config.x0, dtype=np.float64)
    d = problem.dim
    if problem.kind == "quadratic":
        scale = 1.0 if config.x0_scale is None else config.x0_scale
        pattern = np.where(np.arange(d) % 2 == 0, 1.0, -1.0)
        return pattern * (scale / math.sqrt(d))
    if problem.kind == "rosenbrock":
        x0 = np.where(np.arange(d) % 2 == 0, -1.2, 1.0)
        return x0
    if problem.kind == "logistic":
        return np.zeros(d)
    scale = 0.1 if config.x0_scale is None else config.x0_scale
    rng = np.random.default_rng([config.x0_seed & 0xFFFFFFFF, 101])
    return rng.standard_normal(d) * scale


def run(config: ExperimentConfig, replicate: int = 0) -> TrajectoryRecord:
    """Execute one trajectory; write trace/summary files when out_dir is set.

    Row t carries the pre-step iterate's loss and exact-gradient norm plus
    the effective base rate and adaptive-rate snapshot of step t itself.  A
    non-finite loss, gradient, or iterate aborts the run with the offending
    step recorded; partial traces always carry the diverged marker in their
    metadata sidecar.
    """
    problem = build_problem(config.problem)
    oracle = build_oracle(problem, config, replicate)
    hp = build_hyperparams(config)
    x0 = initial_point(problem, config)
    state = optim.init(config.method, problem.dim, x0, hp)

    record = TrajectoryRecord(
        method=config.method,
        hyper=hp.to_dict(),
        problem=config.problem,
        oracle={**oracle.spec(), "replicate": replicate},
        seed=config.seed,
        snapshot_every=config.snapshot_every,
        kernel_backend=_kernels.BACKEND,
    )

    if config.record_z_residual and (hp.bias_correction or hp.decay):
        raise ConfigError("z-residual recording needs a constant rate and no bias correction")

    x_sum = np.zeros(problem.dim)
    min_gns = math.inf
    prev_x = None  # x_{t-1} for the residual window

    for t in range(1, config.iters + 1):
        x_t = state.x.copy()
        loss = problem.eval(x_t)
        gvec = problem.exact_grad(x_t)
        if not (math.isfinite(loss) and np.isfinite(gvec).all()):
            record.diverged = True
            record.abort_step = t
            break
        gns = float(np.dot(gvec, gvec))
        g = oracle.stochastic_grad(x_t)
        if config.record_z_residual:
            m_prev = state.m.copy()
            v_prev = state.v.copy()
        try:
            optim.step(state, g, hp)
        except PoisonedStateError:
            record.diverged = True
            record.abort_step = t
            break
        record.steps.append(t)
        record.losses.append(loss)
        record.grad_norm_sq.append(gns)
        record.eta_ts.append(hp.eta_at(t))
        if t % config.snapshot_every == 0:
            record.snapshots[t] = snapshot_alr(state, hp)
        if config.record_z_residual and prev_x is not None:
            record.z_residuals[t] = z_residual(
                prev_x, x_t, state.x, m_prev, v_prev, state.v, g, hp
            )
        prev_x = x_t
        x_sum += x_t
        min_gns = min(min_gns, gns)

    if not record.diverged:
        final_loss = problem.eval(state.x)
        record.final_loss = final_loss
        if not math.isfinite(final_loss):
            record.diverged = True
            record.abort_step = config.iters + 1
        record.final_x = state.x.tolist()
        record.final_state = state.to_dict()
        record.min_grad_norm_sq = min_gns
        if problem.fstar_attained:
            try:
                record.final_gap = problem.optimality_gap(state.x)
                record.avg_iterate_gap = problem.optimality_gap(x_sum / config.iters)
            except UnsupportedQueryError:
                pass
        if hasattr(problem, "test_accuracy"):
            try:
                record.test_accuracy = problem.test_accuracy(state.x)
            except UnsupportedQueryError:
                pass
    record.clip_count = oracle.clip_count

    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        suffix = "" if replicate == 0 else f"_r{replicate}"
        write_trace_csv(record, out / f"trace{suffix}.csv")
        write_summary_json(record, out / f"summary{suffix}.json")
    return record


def _sample_std(values: np.ndarray) -> float:
    """ddof=1 standard deviation, exactly 0.0 for identical samples."""
    if values.size < 2 or values.min() == values.max():
        return 0.0
    return float(values.std(ddof=1))


def metric_value(record: TrajectoryRecord, metric: str) -> float:
    if record.diverged:
        return math.inf
    value = {
        "final_loss": record.final_loss,
        "final_gap": record.final_gap,
        "avg_iterate_gap": record.avg_iterate_gap,
        "min_grad_norm_sq": record.min_grad_norm_sq,
        "test_accuracy": record.test_accuracy,
    }[metric]
    if value is None:
        raise UnsupportedQueryError(f"metric {metric!r} unavailable for this run")
    return value


def _single_metric(config: ExperimentConfig, replicate: int, metric: str) -> float:
    """One replicate's metric; inf signals divergence."""
    return metric_value(run(config, replicate), metric)


# ---------------------------------------------------------------------------
# rate studies


@dataclass(frozen=True)
class RateStudy:
    """Scaling check: run a method at several iteration budgets T and fit the
    log-log slope of the averaged metric against T.

    The base rate at budget T follows ``eta_rule``; its constant c is either
    supplied or calibrated by a coarse sweep at the smallest T and then held
    fixed across the grid.  Calibration "min_metric" picks the sweep's best
    metric; "max_stable" picks the largest constant that never diverged
    (appropriate when the transient must be fully contracted at every T).
    """

    base: ExperimentConfig
    T_grid: tuple
    eta_rule: str = "const_over_sqrtT"
    metric: str = "min_grad_norm_sq"
    c: float | None = None
    c_grid: tuple = (0.01, 0.03, 0.1, 0.3, 1.0, 3.0)
    calibration: str = "min_metric"
    calibration_replicates: int = 3
    replicates: int = 10

    def __post_init__(self):
        grid = tuple(int(T) for T in self.T_grid)
        object.__setattr__(self, "T_grid", grid)
        if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("T grid must be strictly increasing with >= 3 points")
        if self.eta_rule not in ETA_RULES:
            raise ConfigError(f"unknown eta rule {self.eta_rule!r}, expected one of {ETA_RULES}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.calibration not in ("min_metric", "max_stable"):
            raise ConfigError(f"unknown calibration mode {self.calibration!r}")


def eta_for(rule: str, c: float, T: int) -> float:
    if rule == "const_over_sqrtT":
        return c / math.sqrt(T)
    if rule == "const_over_T":
        return c / T
    if rule == "const_over_Tsq":
        return c / (T * T)
    return c


@dataclass
class RateResult:
    slope: float
    c: float
    eta_rule: str
    metric: str
    table: list  # per-T dicts: T, eta, metric_mean, metric_std, replicates


def calibrate_c(study: RateStudy) -> float:
    """Coarse sweep at the smallest budget in the grid."""
    T0 = study.T_grid[0]
    scored = []
    for c in study.c_grid:
        cfg = replace(study.base, eta=eta_for(study.eta_rule, c, T0), iters=T0, out_dir=None)
        values = []
        stable = True
        for r in range(study.calibration_replicates):
            val = _single_metric(cfg, r, study.metric)
            if math.isinf(val):
                stable = False
                break
            values.append(val)
        if stable:
            scored.append((c, float(np.mean(values))))
    if not scored:
        raise DivergedRunError(f"every sweep constant diverged at T={T0}: {study.c_grid}")
    if study.calibration == "max_stable":
        return max(c for c, _ in scored)
    return min(scored, key=lambda pair: pair[1])[0]


def rate_study(study: RateStudy, out_dir=None) -> RateResult:
    c = study.c if study.c is not None else calibrate_c(study)
    table = []
    means = []
    for T in study.T_grid:
        eta_T = eta_for(study.eta_rule, c, T)
        cfg = replace(study.base, eta=eta_T, iters=T, out_dir=None)
        values = []
        for r in range(study.replicates):
            val = _single_metric(cfg, r, study.metric)
            if math.isinf(val):
                raise DivergedRunError(
                    f"run diverged in rate study: T={T}, replicate={r}, eta={eta_T}"
                )
            values.append(val)
        values = np.asarray(values)
        table.append({
            "T": T,
            "eta": eta_T,
            "metric_mean": float(values.mean()),
            "metric_std": _sample_std(values),
            "replicates": int(values.size),
        })
        means.append(float(values.mean()))
    slope = loglog_slope(list(study.T_grid), means)
    result = RateResult(slope=slope, c=c, eta_rule=study.eta_rule, metric=study.metric, table=table)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "rate.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["T", "eta", "metric_mean", "metric_std", "replicates"])
            for row in table:
                writer.writerow([row["T"], repr(row["eta"]), repr(row["metric_mean"]),
                                 repr(row["metric_std"]), row["replicates"]])
        with open(out / "rate_summary.json", "w") as f:
            json.dump({"slope": slope, "c": c, "eta_rule": study.eta_rule,
                       "metric": study.metric, "table": table,
                       "base": study.base.to_dict(), "T_grid": list(study.T_grid)},
                      f, indent=2, sort_keys=True)
            f.write("\n")
    return result


# ---------------------------------------------------------------------------
# grid search


def default_grid(method: str) -> dict:
    """The conventional search lattice; softplus methods also sweep beta."""
    grid = {
        "eta": [10.0, 1.0, 0.1, 0.01, 0.001, 0.0001],
        "beta1": [0.9, 0.99],
        "beta2": [0.99, 0.999],
    }
    if optim.resolve_method(method).calib == "softplus":
        grid["beta"] = [10.0, 50.0, 100.0]
    return grid


@dataclass
class GridResult:
    metric: str
    rows: list  # ranked dicts: rank, params, metric_mean, metric_std, diverged


def grid_search(base: ExperimentConfig, grid: dict | None = None, out_dir=None) -> GridResult:
    """Run every lattice point (replicated) and rank by the metric mean.

    Diverged cells are kept, flagged, and ranked last.  Lower is better for
    every metric except test_accuracy.
    """
    if grid is None:
        grid = default_grid(base.method)
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid lattice must be nonempty")
    keys = list(grid.keys())
    rows = []
    for cell_index, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        params = dict(zip(keys, combo))
        overrides = dict(base.hyper)
        overrides.update({k: v for k, v in params.items() if k != "eta"})
        cfg = replace(base, eta=params.get("eta", base.eta), hyper=overrides, out_dir=None)
        values = []
        diverged = 0
        for r in range(base.replicates):
            val = _single_metric(cfg, r, base.metric)
            if math.isinf(val):
                diverged += 1
            else:
                values.append(val)
        if diverged:
            mean = std = None
        else:
            arr = np.asarray(values)
            mean = float(arr.mean())
            std = _sample_std(arr)
        rows.append({
            "cell": cell_index,
            "params": params,
            "metric_mean": mean,
            "metric_std": std,
            "diverged": diverged,
        })
    sign = -1.0 if base.metric == "test_accuracy" else 1.0
    rows.sort(key=lambda r: (math.inf if r["metric_mean"] is None else sign * r["metric_mean"],
                             r["cell"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    result = GridResult(metric=base.metric, rows=rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "grid.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["rank"] + keys + ["metric_mean", "metric_std", "diverged"])
            for row in rows:
                writer.writerow(
                    [row["rank"]]
                    + [repr(float(row["params"][k])) for k in keys]
                    + ["" if row["metric_mean"] is None else repr(row["metric_mean"]),
                       "" if row["metric_std"] is None else repr(row["metric_std"]),
                       row["diverged"]]
                )
        with open(out / "grid_summary.json", "w") as f:
            json.dump({"metric": base.metric, "rows": rows, "base": base.to_dict(),
                       "grid": grid}, f, indent=2, sort_keys=True)
            f.write("\n")
    return result


# ---------------------------------------------------------------------------
# method comparison


def compare(configs: list[ExperimentConfig], replicates: int | None = None, out_dir=None) -> list:
    """Mean +- sample standard deviation of the final metric per method.

    All configs must share the problem and the iteration budget.
    """
    if not configs:
        raise ConfigError("compare needs at least one config")
    first = configs[0]
    for cfg in configs[1:]:
        if cfg.problem != first.problem:
            raise ConfigError("compare configs must share the same problem")
        if cfg.iters != first.iters:
            raise ConfigError("compare configs must share the same iteration budget")
    rows = []
    for cfg in configs:
        n = replicates if replicates is not None else cfg.replicates
        values = []
        diverged = 0
        for r in range(n):
            val = _single_metric(cfg, r, cfg.metric)
            if math.isinf(val):
                diverged += 1
            else:
                values.append(val)
        arr = np.asarray(values) if values else np.asarray([math.nan])
        rows.append({
            "method": cfg.method,
            "eta": cfg.eta,
            "metric": cfg.metric,
            "metric_mean": float(arr.mean()) if values else None,
            "metric_std": _sample_std(arr) if values else None,
            "replicates": n,
            "diverged": diverged,
        })
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "compare.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["method", "eta", "metric", "metric_mean", "metric_std",
                             "replicates", "diverged"])
            for row in rows:
                writer.writerow([row["method"], repr(row["eta"]), row["metric"],
                                 "" if row["metric_mean"] is None else repr(row["metric_mean"]),
                                 "" if row["metric_std"] is None else repr(row["metric_std"]),
                                 row["replicates"], row["diverged"]])
        with open(out / "compare_summary.json", "w") as f:
            json.dump({"rows": rows, "configs": [c.to_dict() for c in configs]},
                      f, indent=2, sort_keys=True)
            f.write("\n")
    return rows
