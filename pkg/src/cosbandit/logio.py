"""CSV persistence of per-slot logs, final statistics, summaries and regret curves.

Floats are written with ``repr`` so every value parses back bit-exactly.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .cos import Phase
from .env import MetricsLog
from .oracle import error_rate_metrics

__all__ = [
    "SCHEMA_VERSION",
    "LOG_COLUMNS",
    "write_log_csv",
    "read_log_csv",
    "write_stats_csv",
    "read_stats_csv",
    "log_summary",
    "aggregate_summary",
    "write_summary_csv",
    "curve_points",
    "write_regret_curve",
]

SCHEMA_VERSION = 1

LOG_COLUMNS = [
    "t", "learner", "phase", "arm_kind", "arm_index", "cell", "peer_fn", "prediction",
    "label", "reward", "oracle_arm", "inst_regret", "cum_regret", "probes",
    "epoch", "reveal_t", "stats_entries", "oracle_value",
]
_PHASES = [p.label for p in Phase]
_KINDS = ["own", "peer"]


def _f(v: float) -> str:
    return "" if math.isnan(v) else repr(v)


def write_log_csv(log: MetricsLog, path: str | Path) -> None:
    d = log.context.shape[1]
    synthetic = log.mode == "synthetic"
    arms = log.arms
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS + [f"ctx_{j}" for j in range(d)])
        cols = zip(
            log.t.tolist(), log.learner.tolist(), log.phase.tolist(), log.arm_kind.tolist(),
            log.arm_index.tolist(), log.cell.tolist(), log.peer_fn.tolist(),
            log.prediction.tolist(), log.label.tolist(), log.reward.tolist(),
            log.oracle_slot.tolist(), log.inst_regret.tolist(), log.cum_regret.tolist(),
            log.probes.tolist(), log.epoch.tolist(), log.reveal_t.tolist(),
            log.stats_entries.tolist(), log.oracle_value.tolist(), log.context.tolist(),
        )
        for (t, i, ph, kind, idx, cell, pf, pred, y, r, os_, inst, cum, pr, ep, rv, se, ov, x) in cols:
            oracle = str(arms[i][os_]) if synthetic else ""
            w.writerow([
                t, i, _PHASES[ph], _KINDS[kind], idx, cell, pf, pred, y, repr(r), oracle,
                _f(inst), _f(cum), pr, ep, rv, se, _f(ov), *map(repr, x),
            ])


def read_log_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a per-slot log back into columns (phases as ``Phase`` codes)."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    cols = dict(zip(header, zip(*rows))) if rows else {h: () for h in header}
    phase_code = {p.label: int(p) for p in Phase}
    ints = ["t", "learner", "arm_index", "cell", "peer_fn", "prediction", "label", "probes",
            "epoch", "reveal_t", "stats_entries"]
    out: dict[str, np.ndarray] = {}
    for k in ints:
        out[k] = np.array([int(v) for v in cols[k]], dtype=np.int64)
    for k in ["reward", "inst_regret", "cum_regret", "oracle_value"]:
        out[k] = np.array([float(v) if v else math.nan for v in cols[k]], dtype=float)
    out["phase"] = np.array([phase_code[v] for v in cols["phase"]], dtype=np.int8)
    out["arm_kind"] = np.array([_KINDS.index(v) for v in cols["arm_kind"]], dtype=np.int8)
    out["oracle_arm"] = np.array(cols["oracle_arm"], dtype=object)
    ctx = sorted((h for h in header if h.startswith("ctx_")), key=lambda h: int(h[4:]))
    out["context"] = np.array([[float(v) for v in cols[h]] for h in ctx]).T.reshape(len(rows), len(ctx))
    return out


STATS_COLUMNS = ["epoch", "learner", "arm_kind", "arm_index", "cell",
                 "n_explore_exploit", "n_peer_arrivals", "reward_count", "mean"]


def write_stats_csv(log: MetricsLog, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        for epoch, i, slot, cell, n, n1, count, mean in log.meta["final_stats"]:
            arm = log.arms[i][slot]
            w.writerow([epoch, i, arm.kind, arm.index, cell, n, n1, count,
                        "" if mean is None else repr(mean)])


def read_stats_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append({
                "epoch": int(row["epoch"]),
                "learner": int(row["learner"]),
                "arm_kind": row["arm_kind"],
                "arm_index": int(row["arm_index"]),
                "cell": int(row["cell"]),
                "n_explore_exploit": int(row["n_explore_exploit"]),
                "n_peer_arrivals": int(row["n_peer_arrivals"]),
                "reward_count": int(row["reward_count"]),
                "mean": float(row["mean"]) if row["mean"] else None,
            })
        return out


def log_summary(log: MetricsLog) -> list[dict]:
    """Per-learner final regret (synthetic only) and phase percentages."""
    errs = error_rate_metrics(log)
    out = []
    for i in range(log.M):
        e = errs[i]
        rows = log.learner == i
        regret = float(log.cum_regret[rows][-1]) if log.mode == "synthetic" and rows.any() else math.nan
        out.append({
            "learner": i,
            "final_regret": regret,
            "error_pct": e.error_pct,
            "train_pct": e.train_pct,
            "explore_pct": e.explore_pct,
            "exploit_pct": e.exploit_pct,
            "probes": e.probes,
        })
    return out


_SUMMARY_FIELDS = ["final_regret", "error_pct", "train_pct", "explore_pct", "exploit_pct", "probes"]


def aggregate_summary(per_seed: Sequence[Sequence[dict]]) -> list[dict]:
    """Mean and population std across seeds (in the given seed order)."""
    M = len(per_seed[0])
    out = []
    for i in range(M):
        row: dict = {"schema_version": SCHEMA_VERSION, "learner": i, "seeds": len(per_seed)}
        for key in _SUMMARY_FIELDS:
            vals = np.array([float(s[i][key]) for s in per_seed])
            if np.isnan(vals).all():
                row[f"mean_{key}"] = math.nan
                row[f"std_{key}"] = math.nan
            else:
                row[f"mean_{key}"] = float(np.mean(vals))
                row[f"std_{key}"] = float(np.std(vals))
        out.append(row)
    return out


def write_summary_csv(rows: Sequence[dict], path: str | Path) -> None:
    fields = ["schema_version", "learner", "seeds"] + [
        f"{p}_{k}" for k in _SUMMARY_FIELDS for p in ("mean", "std")
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([r[f] if isinstance(r[f], int) else _f(r[f]) for f in fields])


def curve_points(T: int, max_points: int = 2000) -> np.ndarray:
    """Slot indices 1..T, log-spaced, at most ``max_points``, always including T."""
    if T <= max_points:
        return np.arange(1, T + 1)
    pts = np.unique(np.round(np.logspace(0, np.log10(T), max_points)).astype(np.int64))
    pts = pts[(pts >= 1) & (pts <= T)]
    if pts[-1] != T:
        pts = np.append(pts, T)
    while len(pts) > max_points:
        pts = np.delete(pts, len(pts) // 2)
    return pts


def write_regret_curve(
    curves: Sequence[np.ndarray], path: str | Path, full: bool = False
) -> None:
    """``curves[s]`` is a ``(T, M)`` array of cumulative regret for seed ``s``."""
    stack = np.stack(curves)  # seeds x T x M
    T, M = stack.shape[1], stack.shape[2]
    pts = np.arange(1, T + 1) if full else curve_points(T)
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["schema_version", "t", "learner", "mean_cum_regret", "std_cum_regret"])
        for t in pts.tolist():
            for i in range(M):
                w.writerow([SCHEMA_VERSION, t, i, repr(float(mean[t - 1, i])), repr(float(std[t - 1, i]))])
