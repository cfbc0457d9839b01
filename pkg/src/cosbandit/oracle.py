"""Ground-truth optimal arm, pseudo-regret and error-rate metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .arms import OWN, PEER, AccuracyFunction, ArmId
from .cos import Phase
from .errors import UnsupportedModeError

if TYPE_CHECKING:
    from .env import MetricsLog, Scenario

__all__ = [
    "OracleView",
    "RegretSeries",
    "ErrorSummary",
    "build_views",
    "optimal_arm",
    "pseudo_regret",
    "error_rate_metrics",
]


class OracleView:
    """True accuracies and costs of every arm of one learner.

    A peer arm is represented by all of that peer's own functions; its
    benchmark accuracy is the best of them.
    """

    def __init__(
        self,
        arms: Sequence[ArmId],
        functions: Sequence[Sequence[AccuracyFunction]],
        costs: Sequence[float],
        sources: Sequence[tuple[int, int]] | None = None,
    ) -> None:
        if not (len(arms) == len(functions) == len(costs)):
            raise ValueError("arms, functions and costs must have equal length")
        self.arms = list(arms)
        self.functions = [list(fs) for fs in functions]
        self.costs = list(costs)
        # (learner, fn) per slot into a table of all accuracies; fn = -1 means best of learner
        self.sources = None if sources is None else list(sources)

    def arm_value(self, slot: int, x: Sequence[float]) -> float:
        """mu_k(x) = pi_k(x) - d_k, with pi of a peer being its best function."""
        return max(f(x) for f in self.functions[slot]) - self.costs[slot]

    def used_value(self, slot: int, fn: int, x: Sequence[float]) -> float:
        """Value of the arm as actually executed (``fn`` is the function used)."""
        fs = self.functions[slot]
        f = fs[0] if len(fs) == 1 else fs[fn]
        return f(x) - self.costs[slot]

    def best(self, x: Sequence[float]) -> tuple[int, float]:
        best_slot = 0
        best_val = None
        for slot, (fs, c) in enumerate(zip(self.functions, self.costs)):
            if len(fs) == 1:
                v = fs[0](x) - c
            else:
                v = max(f(x) for f in fs) - c
            if best_val is None or v > best_val:
                best_slot, best_val = slot, v
        return best_slot, best_val


    def best_from(self, acc: Sequence[Sequence[float]]) -> tuple[int, float]:
        """Same as :meth:`best` from a precomputed ``acc[learner][fn]`` table."""
        best_slot = 0
        best_val = None
        for slot, ((k, f), c) in enumerate(zip(self.sources, self.costs)):
            v = (acc[k][f] if f >= 0 else max(acc[k])) - c
            if best_val is None or v > best_val:
                best_slot, best_val = slot, v
        return best_slot, best_val

    def used_from(self, acc: Sequence[Sequence[float]], slot: int, fn: int) -> float:
        k, f = self.sources[slot]
        return acc[k][f if f >= 0 else fn] - self.costs[slot]


def build_views(sc: "Scenario") -> list[OracleView]:
    if sc.mode != "synthetic":
        raise UnsupportedModeError("oracle needs true accuracies; use error_rate_metrics in trace mode")
    views = []
    for i, lr in enumerate(sc.learners):
        arms = [ArmId(OWN, f) for f in range(len(lr.functions))]
        fns = [[f] for f in lr.functions]
        costs = list(lr.costs)
        sources = [(i, f) for f in range(len(lr.functions))]
        for k in range(sc.M):
            if k == i:
                continue
            arms.append(ArmId(PEER, k))
            fns.append(list(sc.learners[k].functions))
            costs.append(sc.peer_cost(i, k))
            sources.append((k, -1))
        views.append(OracleView(arms, fns, costs, sources))
    return views


def optimal_arm(v: OracleView, x: Sequence[float]) -> tuple[ArmId, float]:
    """argmax_k pi_k(x) - d_k; ties go to the smallest arm index."""
    slot, val = v.best(x)
    return v.arms[slot], val


@dataclass
class RegretSeries:
    """Per-learner pseudo-regret, indexed by the learner's own slot order."""

    t: dict[int, np.ndarray]
    instantaneous: dict[int, np.ndarray]
    cumulative: dict[int, np.ndarray]
    explore_attributed: dict[int, float]
    exploit_attributed: dict[int, float]

    def total(self, learner: int) -> float:
        c = self.cumulative[learner]
        return float(c[-1]) if len(c) else 0.0


def pseudo_regret(log: "MetricsLog", views: Sequence[OracleView]) -> RegretSeries:
    """Recompute pseudo-regret slot by slot from the logged choices.

    Uses only contexts, chosen arms and the peer function actually used, so it
    is independent of the regret values stored in the log.
    """
    if log.mode != "synthetic":
        raise UnsupportedModeError("pseudo-regret needs true accuracies; use error_rate_metrics")
    ts, inst, cum, expl, expt = {}, {}, {}, {}, {}
    for i, v in enumerate(views):
        rows = np.flatnonzero(log.learner == i)
        vals = np.empty(len(rows))
        for n, r in enumerate(rows):
            x = tuple(log.context[r].tolist())
            _, best = v.best(x)
            vals[n] = best - v.used_value(int(log.arm_slot[r]), int(log.peer_fn[r]), x)
        ts[i] = log.t[rows]
        inst[i] = vals
        cum[i] = np.cumsum(vals)
        phase = log.phase[rows]
        expt[i] = float(vals[phase == Phase.EXPLOIT].sum())
        expl[i] = float(vals[phase != Phase.EXPLOIT].sum())
    return RegretSeries(ts, inst, cum, expl, expt)


@dataclass
class ErrorSummary:
    learner: int
    slots: int
    error_pct: float
    train_pct: float
    explore_pct: float
    exploit_pct: float
    probes: int


def error_rate_metrics(log: "MetricsLog", learner: int | None = None) -> dict[int, ErrorSummary]:
    """Error and phase percentages per learner (all learners by default)."""
    learners = range(log.M) if learner is None else [learner]
    out = {}
    for i in learners:
        mask = log.learner == i
        n = int(mask.sum())
        if n == 0:
            out[i] = ErrorSummary(i, 0, float("nan"), float("nan"), float("nan"), float("nan"), 0)
            continue
        phase = log.phase[mask]
        wrong = int((log.prediction[mask] != log.label[mask]).sum())
        out[i] = ErrorSummary(
            learner=i,
            slots=n,
            error_pct=100.0 * wrong / n,
            train_pct=100.0 * int((phase == Phase.TRAIN).sum()) / n,
            explore_pct=100.0 * int((phase == Phase.EXPLORE).sum()) / n,
            exploit_pct=100.0 * int((phase == Phase.EXPLOIT).sum()) / n,
            probes=int(log.probes[mask].sum()),
        )
    return out
