"""Command-line simulator: replications, per-slot logs and summaries.

Exit status: 0 on success, 1 on configuration or parse errors, 2 when a
runtime invariant fails (a bug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .env import DelaySpec, MetricsLog, Scenario, run, run_doubling
from .errors import ConfigError, InvariantViolation, TraceParseError, TraceSchemaError
from .logio import (
    SCHEMA_VERSION,
    aggregate_summary,
    log_summary,
    write_log_csv,
    write_regret_curve,
    write_stats_csv,
    write_summary_csv,
)
from .scenario import validate_scenario
from .trace import open_trace

log = logging.getLogger("cosbandit")

__all__ = ["RunConfig", "main", "validate_scenario", "parse_seeds", "check_log_invariants"]


@dataclass(frozen=True)
class RunConfig:
    scenario: Path
    seeds: tuple[int, ...]
    out: Path
    mode: str | None = None
    trace: Path | None = None
    horizon: int | None = None
    doubling: bool = False
    delay_max: int | None = None
    time_as_context: bool = False
    full_logs: bool = False
    summary_only: bool = False


def parse_seeds(count: int | None, seed_list: str | None) -> tuple[int, ...]:
    if seed_list is not None:
        seeds = [int(s) for s in seed_list.replace(";", ",").split(",") if s.strip()]
        if not seeds:
            raise ConfigError("--seed-list is empty")
        if len(set(seeds)) != len(seeds):
            raise ConfigError("--seed-list has duplicates")
        return tuple(seeds)
    n = 1 if count is None else count
    if n < 1:
        raise ConfigError("--seeds must be >= 1")
    return tuple(range(n))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cos-sim", description=__doc__.splitlines()[0])
    p.add_argument("--scenario", required=True, type=Path, help="scenario JSON file")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seeds", type=int, help="run seeds 0..n-1")
    g.add_argument("--seed-list", help="comma-separated seeds")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--horizon", type=int, help="override the scenario horizon T")
    p.add_argument("--mode", choices=["synthetic", "trace"], help="override the scenario mode")
    p.add_argument("--trace", type=Path, help="trace CSV (trace mode)")
    p.add_argument("--doubling", action="store_true", help="restart CoS on phases of length 2^tau")
    p.add_argument("--delay-max", type=int, help="label delay bound L_max")
    p.add_argument("--time-as-context", action="store_true", help="append normalized time to the context")
    p.add_argument("--full-logs", action="store_true", help="regret curve at full resolution")
    p.add_argument("--summary-only", action="store_true", help="skip per-slot and stats CSVs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _effective_scenario(sc: Scenario, cfg: RunConfig) -> Scenario:
    changes: dict = {}
    if cfg.horizon is not None:
        changes["T"] = cfg.horizon
    if cfg.mode is not None and cfg.mode != sc.mode:
        changes["mode"] = cfg.mode
    if cfg.trace is not None:
        changes["trace_path"] = str(cfg.trace)
    if cfg.delay_max is not None:
        law = sc.delay.law if sc.delay is not None else "fixed"
        changes["delay"] = DelaySpec(cfg.delay_max, law)
    if cfg.time_as_context:
        changes["time_as_context"] = True
    return replace(sc, **changes) if changes else sc


def check_log_invariants(log_: MetricsLog) -> None:
    """Cheap post-run checks; any failure is a bug."""
    T = log_.meta["horizon"]
    for i in range(log_.M):
        n = int((log_.learner == i).sum())
        if n != T:
            raise InvariantViolation(f"learner {i}: {n} records for {T} slots")
    if log_.mode == "synthetic" and len(log_) and log_.inst_regret.min() < -1e-12:
        raise InvariantViolation("negative instantaneous pseudo-regret")
    max_buf = log_.meta["max_buffer"]
    sc_delay = log_.meta.get("l_max", 0)
    if max_buf > log_.M * (sc_delay + 1):
        raise InvariantViolation(f"feedback buffer reached {max_buf}")


def run_replication(sc: Scenario, seed: int, cfg: RunConfig) -> dict:
    sc = replace(sc, seed=seed)
    trace = None
    if sc.mode == "trace":
        trace = open_trace(sc.trace_path, sc.d, [len(lr.functions) for lr in sc.learners])
    try:
        if cfg.doubling:
            mlog = run_doubling(sc, sc.T, trace=trace)
        else:
            mlog = run(sc, trace=trace)
    finally:
        if trace is not None:
            trace.close()
    mlog.meta["l_max"] = sc.delay.l_max if sc.delay is not None else 0
    check_log_invariants(mlog)
    if not cfg.summary_only:
        write_log_csv(mlog, cfg.out / f"log_seed{seed}.csv")
        write_stats_csv(mlog, cfg.out / f"stats_seed{seed}.csv")
    curve = None
    if mlog.mode == "synthetic":
        curve = mlog.cum_regret.reshape(-1, mlog.M)
    return {"seed": seed, "summary": log_summary(mlog), "curve": curve, "horizon": mlog.meta["horizon"]}


def _worker(args) -> dict:
    sc, seed, cfg = args
    return run_replication(sc, seed, cfg)


def _threads() -> int:
    raw = os.environ.get("COS_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"COS_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("COS_THREADS must be >= 1")
    return n


def execute(cfg: RunConfig) -> list[dict]:
    sc = _effective_scenario(validate_scenario(cfg.scenario), cfg)
    if sc.mode == "trace" and sc.trace_path is None:
        raise ConfigError("trace mode needs --trace or a \"trace\" field in the scenario")
    if cfg.doubling and sc.T < 2:
        raise ConfigError("--doubling needs a horizon >= 2")
    if sc.mode == "trace":
        # schema errors surface before any replication starts
        open_trace(sc.trace_path, sc.d, [len(lr.functions) for lr in sc.learners]).close()
    cfg.out.mkdir(parents=True, exist_ok=True)
    jobs = [(sc, seed, cfg) for seed in cfg.seeds]
    workers = min(_threads(), len(jobs))
    if workers <= 1:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))

    summary = aggregate_summary([r["summary"] for r in results])
    write_summary_csv(summary, cfg.out / "summary.csv")
    curves = [r["curve"] for r in results]
    synthetic = sc.mode == "synthetic"
    if synthetic:
        write_regret_curve(curves, cfg.out / "regret_curve.csv", full=cfg.full_logs)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "scenario": str(cfg.scenario),
        "mode": sc.mode,
        "seeds": list(cfg.seeds),
        "horizon": results[0]["horizon"],
        "doubling": cfg.doubling,
        "delay_max": None if sc.delay is None else sc.delay.l_max,
        "time_as_context": sc.time_as_context,
        "files": sorted(p.name for p in cfg.out.iterdir() if p.suffix == ".csv"),
    }
    (cfg.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return summary


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = RunConfig(
            scenario=args.scenario,
            seeds=parse_seeds(args.seeds, args.seed_list),
            out=args.out,
            mode=args.mode,
            trace=args.trace,
            horizon=args.horizon,
            doubling=args.doubling,
            delay_max=args.delay_max,
            time_as_context=args.time_as_context,
            full_logs=args.full_logs,
            summary_only=args.summary_only,
        )
        if cfg.horizon is not None and cfg.horizon < 1:
            raise ConfigError("--horizon must be >= 1")
        if cfg.delay_max is not None and cfg.delay_max < 0:
            raise ConfigError("--delay-max must be >= 0")
        summary = execute(cfg)
    except (ConfigError, TraceParseError, TraceSchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"invariant violation (bug): {exc}", file=sys.stderr)
        return 2
    for row in summary:
        log.info("learner %d: %s", row["learner"], row)
    print(f"wrote {len(cfg.seeds)} replication(s) to {cfg.out}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
