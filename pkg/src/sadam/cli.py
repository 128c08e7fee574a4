"""Command-line entry point.

Subcommands: run, grid, rate, compare.  Each accepts --config FILE (JSON)
plus flags that override the config's base experiment.  Exit codes: 0 on
success, 1 on configuration errors, 2 when any run diverged.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .errors import DivergedRunError, SadamError
from .harness import (
    ExperimentConfig,
    RateStudy,
    compare,
    grid_search,
    rate_study,
    run,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); 2 means "diverged" here
        raise SadamError(message)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--method")
    p.add_argument("--problem", choices=["quadratic", "rosenbrock", "logistic", "mlp"])
    p.add_argument("--eta", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--G", type=float)
    p.add_argument("--replicates", type=int)
    p.add_argument("--snapshot-every", type=int, dest="snapshot_every")
    p.add_argument("--out", dest="out_dir", help="output directory")


def _base_config(args, raw: dict) -> ExperimentConfig:
    base = dict(raw.get("base", raw) if "base" in raw or "configs" not in raw else {})
    base.setdefault("problem", {"kind": "quadratic"})
    base.setdefault("method", "adam")
    base.setdefault("eta", 0.01)
    base.setdefault("iters", 1000)
    if args.problem:
        base["problem"] = {"kind": args.problem}
    for name in ("method", "eta", "iters", "seed", "replicates", "snapshot_every", "out_dir"):
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    hyper = dict(base.get("hyper", {}))
    for name in ("beta1", "beta2", "epsilon", "beta", "p"):
        value = getattr(args, name, None)
        if value is not None:
            hyper[name] = value
    if hyper:
        base["hyper"] = hyper
    oracle = dict(base.get("oracle", {}))
    if args.sigma is not None:
        oracle["sigma"] = args.sigma
    if args.G is not None:
        oracle["G"] = args.G
    if oracle:
        base["oracle"] = oracle
    return ExperimentConfig.from_dict(base)


def _load(args) -> dict:
    if args.config:
        with open(args.config) as f:
            return json.load(f)
    return {}


def _cmd_run(args) -> int:
    config = _base_config(args, _load(args))
    record = run(config)
    if record.diverged:
        print(f"run diverged at step {record.abort_step}")
        return 2
    print(f"method={record.method} final_loss={record.final_loss!r} "
          f"steps={len(record.steps)} backend={record.kernel_backend}")
    if config.out_dir:
        print(f"trace written under {config.out_dir}")
    return 0


def _cmd_grid(args) -> int:
    raw = _load(args)
    base = _base_config(args, raw)
    result = grid_search(base, raw.get("grid"), out_dir=base.out_dir)
    best = result.rows[0]
    print(f"grid of {len(result.rows)} cells, metric={result.metric}")
    print(f"best: rank=1 params={best['params']} mean={best['metric_mean']!r} "
          f"std={best['metric_std']!r}")
    return 2 if any(row["diverged"] for row in result.rows) else 0


def _cmd_rate(args) -> int:
    raw = _load(args)
    base = _base_config(args, raw)
    study = RateStudy(
        base=base,
        T_grid=tuple(raw.get("T_grid", (100, 1000, 10000))),
        eta_rule=raw.get("eta_rule", "const_over_sqrtT"),
        metric=raw.get("metric", base.metric),
        c=raw.get("c"),
        c_grid=tuple(raw.get("c_grid", (0.01, 0.03, 0.1, 0.3, 1.0, 3.0))),
        calibration=raw.get("calibration", "min_metric"),
        replicates=raw.get("study_replicates", base.replicates),
    )
    try:
        result = rate_study(study, out_dir=base.out_dir)
    except DivergedRunError as exc:
        print(f"rate study failed: {exc}")
        return 2
    print(f"slope={result.slope:.4f} c={result.c!r} rule={result.eta_rule} "
          f"metric={result.metric}")
    for row in result.table:
        print(f"  T={row['T']:>8d} eta={row['eta']:.3e} "
              f"mean={row['metric_mean']:.6e} std={row['metric_std']:.3e}")
    return 0


def _cmd_compare(args) -> int:
    raw = _load(args)
    if "configs" not in raw:
        raise SadamError("compare needs a config file with a 'configs' list")
    configs = [ExperimentConfig.from_dict(d) for d in raw["configs"]]
    out_dir = args.out_dir or raw.get("out_dir")
    rows = compare(configs, replicates=raw.get("replicates"), out_dir=out_dir)
    width = max(len(r["method"]) for r in rows)
    for row in rows:
        if row["metric_mean"] is None:
            print(f"{row['method']:<{width}}  diverged({row['diverged']})")
        else:
            print(f"{row['method']:<{width}}  {row['metric_mean']:.6f} "
                  f"+- {row['metric_std']:.6f}  ({row['metric']})")
    return 2 if any(row["diverged"] for row in rows) else 0


def main(argv=None) -> int:
    parser = _Parser(prog="sadam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in (("run", _cmd_run), ("grid", _cmd_grid),
                     ("rate", _cmd_rate), ("compare", _cmd_compare)):
        p = sub.add_parser(name)
        _add_common_flags(p)
        p.set_defaults(fn=fn)
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (SadamError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
