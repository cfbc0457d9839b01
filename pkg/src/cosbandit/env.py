"""Synchronous multi-learner simulation.

Each slot every learner, in index order, receives a context, decides, labels
the instance (itself or through a peer) and schedules the label revelation.
Revelations due in the slot are applied after all learners have acted.
"""

from __future__ import annotations

import contextlib
import gc
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .arms import OWN, AccuracyFunction, ArmId
from .cos import TRAIN, ControlConfig, LearnerState, Phase
from .errors import ConfigError, InvariantViolation, ScenarioError
from .oracle import OracleView, build_views
from .partition import Partition, build_partition, slicing_parameter
from .trace import TraceRow, TraceSource

__all__ = [
    "IIDUniform",
    "ConcentratedBall",
    "FromTrace",
    "DelaySpec",
    "LearnerSpec",
    "Scenario",
    "StepRecord",
    "MetricsLog",
    "FeedbackBuffer",
    "Simulation",
    "apply_delayed_feedback",
    "run",
    "run_doubling",
    "doubling_phases",
]

@contextlib.contextmanager
def _gc_paused():
    # per-slot records are acyclic; generational scans over them dominate runtime
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


# rng substreams per learner
_ARRIVAL, _DECIDE, _SERVE, _NOISE, _DELAY = range(5)


# -- arrival processes ------------------------------------------------------
@dataclass(frozen=True)
class IIDUniform:
    def draw(self, rng: random.Random, d: int) -> tuple[float, ...]:
        if d == 1:
            return (rng.random(),)
        return tuple(rng.random() for _ in range(d))

    def to_dict(self) -> dict:
        return {"kind": "uniform"}


@dataclass(frozen=True)
class ConcentratedBall:
    """Uniform on the Euclidean ball ``(center, radius)``, clipped to the cube."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.radius < 0:
            raise ConfigError("ball radius must be >= 0")

    def draw(self, rng: random.Random, d: int) -> tuple[float, ...]:
        r = self.radius
        while True:
            u = [rng.uniform(-r, r) for _ in range(d)]
            if d == 1 or math.fsum(v * v for v in u) <= r * r:
                break
        return tuple(min(1.0, max(0.0, c + v)) for c, v in zip(self.center, u))

    def to_dict(self) -> dict:
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class FromTrace:
    """Contexts and labels come from the trace rows (trace mode)."""

    def to_dict(self) -> dict:
        return {"kind": "trace"}


@dataclass(frozen=True)
class DelaySpec:
    """Label delay: ``fixed`` always waits ``l_max`` slots, ``uniform`` draws from [0, l_max]."""

    l_max: int = 0
    law: str = "fixed"

    def __post_init__(self) -> None:
        if self.l_max < 0:
            raise ConfigError(f"l_max must be >= 0, got {self.l_max}")
        if self.law not in ("fixed", "uniform"):
            raise ConfigError(f"unknown delay law {self.law!r}")


@dataclass(frozen=True)
class LearnerSpec:
    """Own functions (``None`` entries in trace mode), their costs, peer costs and arrivals.

    ``peer_costs[k]`` is the cost this learner pays to call learner ``k``; the
    entry for the learner itself is ignored.
    """

    functions: tuple[AccuracyFunction | None, ...]
    costs: tuple[float, ...]
    peer_costs: tuple[float, ...]
    arrival: object = field(default_factory=IIDUniform)


@dataclass(frozen=True)
class Scenario:
    learners: tuple[LearnerSpec, ...]
    d: int
    T: int
    alpha: float = 1.0
    L: float = 1.0
    F_max: int | None = None
    seed: int = 0
    z: float | None = None
    m_T: int | None = None
    delay: DelaySpec | None = None
    time_as_context: bool = False
    label_prob: float = 0.5
    mode: str = "synthetic"
    trace_path: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "learners", tuple(self.learners))
        if self.F_max is None:
            object.__setattr__(self, "F_max", max(len(lr.functions) for lr in self.learners))
        problems = validate(self)
        if problems:
            raise ScenarioError(problems)

    @property
    def M(self) -> int:
        return len(self.learners)

    @property
    def context_dim(self) -> int:
        """Dimension seen by the partition: ``d``, plus one with time as context."""
        return self.d + 1 if self.time_as_context else self.d

    def peer_cost(self, i: int, k: int) -> float:
        return self.learners[i].peer_costs[k]

    def control(self, horizon: int | None = None) -> ControlConfig:
        horizon = self.T if horizon is None else horizon
        cfg = ControlConfig.theorem_defaults(
            self.alpha, self.d, self.F_max, horizon, self.time_as_context
        )
        if self.z is not None:
            cfg = replace(cfg, z=self.z)
        return cfg

    def slicing(self, horizon: int | None = None) -> int:
        if self.m_T is not None:
            return self.m_T
        horizon = self.T if horizon is None else horizon
        return slicing_parameter(horizon, self.alpha, self.d, self.time_as_context)


def validate(sc: Scenario) -> list[str]:
    problems = []
    if sc.M < 1:
        problems.append("need at least one learner")
    if sc.d < 1:
        problems.append(f"d must be >= 1, got {sc.d}")
    if sc.T < 1:
        problems.append(f"T must be >= 1, got {sc.T}")
    if not sc.alpha > 0:
        problems.append(f"alpha must be > 0, got {sc.alpha}")
    if sc.z is not None and not 0 < sc.z < 1:
        problems.append(f"z must lie in (0,1), got {sc.z}")
    if sc.m_T is not None and sc.m_T < 1:
        problems.append(f"m_T must be >= 1, got {sc.m_T}")
    if not 0.0 <= sc.label_prob <= 1.0:
        problems.append("label_prob out of [0,1]")
    if sc.mode not in ("synthetic", "trace"):
        problems.append(f"unknown mode {sc.mode!r}")
    for i, lr in enumerate(sc.learners):
        n = len(lr.functions)
        if n < 1:
            problems.append(f"learner {i}: needs at least one classification function")
        if n > sc.F_max:
            problems.append(f"learner {i}: {n} functions exceed F_max={sc.F_max}")
        if len(lr.costs) != n:
            problems.append(f"learner {i}: {len(lr.costs)} costs for {n} functions")
        for f, c in enumerate(lr.costs):
            if not 0.0 <= c <= 1.0:
                problems.append(f"learner {i} function {f}: cost out of [0,1] ({c})")
        if len(lr.peer_costs) != sc.M:
            problems.append(f"learner {i}: peer_costs needs {sc.M} entries")
        else:
            for k, c in enumerate(lr.peer_costs):
                if k != i and not 0.0 <= c <= 1.0:
                    problems.append(f"learner {i} peer {k}: cost out of [0,1] ({c})")
        if sc.mode == "synthetic":
            if any(f is None for f in lr.functions):
                problems.append(f"learner {i}: synthetic mode needs accuracy functions")
            if isinstance(lr.arrival, FromTrace):
                problems.append(f"learner {i}: trace arrivals need trace mode")
            if isinstance(lr.arrival, ConcentratedBall) and len(lr.arrival.center) != sc.d:
                problems.append(f"learner {i}: ball center needs {sc.d} coordinates")
    return problems


# -- records and logs --------------------------------------------------------
class StepRecord(NamedTuple):
    t: int
    learner: int
    context: tuple[float, ...]
    cell: int
    phase: Phase
    arm: ArmId
    arm_slot: int
    peer_fn: int
    prediction: int
    true_label: int
    reward: float
    oracle_slot: int
    oracle_value: float
    inst_regret: float
    probes: int
    epoch: int
    reveal_t: int
    stats_entries: int


class MetricsLog:
    """Columnar per-slot log plus run metadata.

    Row order is slot-major, learner-minor. ``arm_slot`` indexes the learner's
    arm list (own functions, then peers); ``cum_regret`` is per learner.
    """

    def __init__(self, records: Sequence[StepRecord], meta: dict) -> None:
        n = len(records)
        self.meta = meta
        self.M: int = meta["M"]
        self.mode: str = meta["mode"]
        self.arms: list[list[ArmId]] = meta["arms"]
        d = meta["context_dim"]
        cols = list(zip(*records)) if n else [()] * len(StepRecord._fields)
        c = dict(zip(StepRecord._fields, cols))

        def col(name, dtype):
            return np.fromiter(c[name], dtype=dtype, count=n)

        self.t = col("t", np.int64)
        self.learner = col("learner", np.int64)
        self.context = np.array(c["context"], dtype=float).reshape(n, d)
        self.cell = col("cell", np.int64)
        self.phase = col("phase", np.int8)
        self.arm_slot = col("arm_slot", np.int64)
        # arm kind/index via per-learner lookup tables
        width = max((len(a) for a in self.arms), default=0)
        kind_tab = np.zeros((self.M, max(width, 1)), dtype=np.int8)
        index_tab = np.zeros((self.M, max(width, 1)), dtype=np.int64)
        for i, arms in enumerate(self.arms):
            for j, arm in enumerate(arms):
                kind_tab[i, j] = arm.kind != OWN
                index_tab[i, j] = arm.index
        self.arm_kind = kind_tab[self.learner, self.arm_slot]
        self.arm_index = index_tab[self.learner, self.arm_slot]
        self.peer_fn = col("peer_fn", np.int64)
        self.prediction = col("prediction", np.int8)
        self.label = col("true_label", np.int8)
        self.reward = col("reward", float)
        self.oracle_slot = col("oracle_slot", np.int64)
        self.oracle_value = col("oracle_value", float)
        self.inst_regret = col("inst_regret", float)
        self.probes = col("probes", np.int64)
        self.epoch = col("epoch", np.int64)
        self.reveal_t = col("reveal_t", np.int64)
        self.stats_entries = col("stats_entries", np.int64)
        self.cum_regret = np.zeros(n)
        for i in range(self.M):
            rows = self.learner == i
            self.cum_regret[rows] = np.cumsum(self.inst_regret[rows])

    def __len__(self) -> int:
        return len(self.t)

    def rows(self, learner: int) -> np.ndarray:
        return np.flatnonzero(self.learner == learner)

    def regret_curve(self, learner: int) -> tuple[np.ndarray, np.ndarray]:
        rows = self.rows(learner)
        return self.t[rows], self.cum_regret[rows]

    def arm_label(self, learner: int, slot: int) -> ArmId:
        return self.arms[learner][slot]


# -- delayed feedback --------------------------------------------------------
class FeedbackBuffer:
    """Pending label revelations keyed by due slot, FIFO within a slot."""

    def __init__(self) -> None:
        self._due: dict[int, deque] = {}
        self.size = 0
        self.max_size = 0

    def push(self, due: int, item: object) -> None:
        q = self._due.get(due)
        if q is None:
            q = self._due[due] = deque()
        q.append(item)
        self.size += 1
        if self.size > self.max_size:
            self.max_size = self.size

    def pop_due(self, t: int) -> list:
        q = self._due.pop(t, None)
        if not q:
            return []
        self.size -= len(q)
        return list(q)

    def pending(self) -> int:
        return self.size


def apply_delayed_feedback(buffer: FeedbackBuffer, t: int) -> list:
    """Remove and return the revelations scheduled for slot ``t``, in enqueue order."""
    return buffer.pop_due(t)


# -- simulation --------------------------------------------------------------
class Streams:
    """Independent ``random.Random`` substreams per (learner, purpose).

    Shared by consecutive instances of a doubling run so that the arrival
    sequence continues across phases.
    """

    def __init__(self, seed: int, M: int) -> None:
        self.by_learner = [[_substream(seed, i, s) for s in range(5)] for i in range(M)]
        self._feeds: list[ArrivalFeed] | None = None

    def feeds(self, sc: "Scenario") -> list["ArrivalFeed"]:
        if self._feeds is None:
            fns = [lr.functions for lr in sc.learners]
            horizon = sc.T if sc.time_as_context else None
            self._feeds = [
                ArrivalFeed(lr.arrival, self.get(i, _ARRIVAL), sc.d, sc.label_prob, fns, horizon)
                for i, lr in enumerate(sc.learners)
            ]
        return self._feeds

    def get(self, learner: int, purpose: int) -> random.Random:
        return self.by_learner[learner][purpose]


def _substream(seed: int, learner: int, purpose: int) -> random.Random:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(learner, purpose))
    state = ss.generate_state(4, dtype=np.uint32)
    return random.Random(int.from_bytes(state.tobytes(), "little"))


class ArrivalFeed:
    """Context/label stream of one learner, prefetched in blocks.

    Draw order on the learner's arrival substream is (context, label) per
    slot, so prefetching does not change any value. With ``functions`` the
    accuracies of every learner's functions at each context are evaluated in
    bulk and returned as ``acc[learner][fn]``.
    """

    BLOCK = 2048

    def __init__(
        self,
        process,
        rng: random.Random,
        d: int,
        label_prob: float,
        functions: Sequence[Sequence[AccuracyFunction]] | None = None,
        time_horizon: int | None = None,
    ) -> None:
        self.process = process
        self.rng = rng
        self.d = d
        self.label_prob = label_prob
        self.functions = functions
        self.time_horizon = time_horizon
        self.slot = 0
        self._buf: list = []
        self._pos = 0

    def _refill(self) -> None:
        rng, draw, d, p = self.rng, self.process.draw, self.d, self.label_prob
        n = self.BLOCK
        xs = []
        ys = []
        for _ in range(n):
            xs.append(draw(rng, d))
            ys.append(1 if rng.random() < p else 0)
        if self.time_horizon is not None:
            T = self.time_horizon
            xs = [x + (min(1.0, (self.slot + j + 1) / T),) for j, x in enumerate(xs)]
        if self.functions is not None:
            X = np.array(xs, dtype=float).reshape(n, -1)
            tables = [
                np.column_stack([f.batch(X) for f in fs]).tolist() for fs in self.functions
            ]
            accs = [list(row) for row in zip(*tables)]
        else:
            accs = [None] * n
        self._buf = list(zip(xs, ys, accs))
        self._pos = 0

    def next(self) -> tuple[tuple[float, ...], int, list | None]:
        if self._pos >= len(self._buf):
            self._refill()
        item = self._buf[self._pos]
        self._pos += 1
        self.slot += 1
        return item


class _Reveal(NamedTuple):
    learner: int
    phase: Phase
    cell: int
    slot: int
    reward: float
    peer: int
    peer_cell: int
    peer_fn: int
    peer_reward: float


class Simulation:
    """One CoS instance over a scenario.

    ``horizon`` sets the control parameters (m_T, z); ``t_offset`` and
    ``epoch`` place this instance inside a longer doubling run.
    """

    def __init__(
        self,
        sc: Scenario,
        *,
        horizon: int | None = None,
        streams: Streams | None = None,
        trace: TraceSource | None = None,
        t_offset: int = 0,
        epoch: int = 0,
        buffered: bool | None = None,
    ) -> None:
        self.sc = sc
        self.horizon = sc.T if horizon is None else horizon
        self.cfg = sc.control(self.horizon)
        self.partition: Partition = build_partition(sc.context_dim, sc.slicing(self.horizon))
        self.streams = streams if streams is not None else Streams(sc.seed, sc.M)
        self.feeds = self.streams.feeds(sc) if sc.mode == "synthetic" else None
        self.t_offset = t_offset
        self.epoch = epoch
        self.t = 0
        self.M = sc.M
        self.states = [
            LearnerState(
                i,
                lr.costs,
                {k: c for k, c in enumerate(lr.peer_costs) if k != i},
                self.partition,
                self.cfg,
                rng=self.streams.get(i, _DECIDE),
            )
            for i, lr in enumerate(sc.learners)
        ]
        self.synthetic = sc.mode == "synthetic"
        self.views: list[OracleView] | None = build_views(sc) if self.synthetic else None
        if sc.mode == "trace" and trace is None:
            raise ConfigError("trace mode needs an open trace source")
        self.trace = trace
        if trace is not None:
            self._cols = [
                [trace.column(i, f) for f in range(len(lr.functions))]
                for i, lr in enumerate(sc.learners)
            ]
        self.buffered = sc.delay is not None if buffered is None else buffered
        self.buffer = FeedbackBuffer()
        self._arrival = [self.streams.get(i, _ARRIVAL) for i in range(self.M)]
        self._serve = [self.streams.get(i, _SERVE) for i in range(self.M)]
        self._noise = [self.streams.get(i, _NOISE) for i in range(self.M)]
        self._delay = [self.streams.get(i, _DELAY) for i in range(self.M)]
        self._fns = [lr.functions for lr in sc.learners]
        self._own_costs = [lr.costs for lr in sc.learners]
        self.exhausted = False

    def meta(self) -> dict:
        sc = self.sc
        return {
            "M": sc.M,
            "mode": sc.mode,
            "context_dim": sc.context_dim,
            "arms": [list(s.arms) for s in self.states],
            "costs": [list(s.costs) for s in self.states],
            "own_costs": [list(c) for c in self._own_costs],
            "m_T": self.partition.m,
            "cell_count": self.partition.cell_count,
            "z": self.cfg.z,
            "F_max": self.cfg.F_max,
            "seed": sc.seed,
        }

    def _probe(self, peer: int, cell: int) -> int:
        return self.states[peer].arrival_count(cell)

    def step(self) -> list[StepRecord]:
        """Advance one slot; returns one record per learner (fewer at trace end)."""
        if self.trace is not None:
            row = self.trace.next()
            if row is None:
                self.exhausted = True
                return []
        else:
            row = None
        self.t += 1
        t = self.t
        t_global = self.t_offset + t
        sc = self.sc
        part = self.partition
        states = self.states
        records = []
        reveals = []
        th = states[0].thresholds(t)
        views = self.views
        feeds = self.feeds
        noise = self._noise
        time_ctx = (min(1.0, t_global / sc.T),) if sc.time_as_context else None
        for i, s in enumerate(states):
            if feeds is not None:
                x, y, acc = feeds[i].next()
                predict = lambda k, f: y if noise[k].random() < acc[k][f] else 1 - y
            else:
                x = row.context
                y = row.true_label
                if time_ctx is not None:
                    x = x + time_ctx
                cols = self._cols
                predict = lambda k, f: row.predictions[cols[k][f]]
            cell = part.cell_of(x)
            s.record_arrival(cell)
            dec = s.decide(cell, t, self._probe, th=th)
            a = dec.arm_index
            if a < s.n_own:
                pred = predict(i, a)
                pf = peer = pcell = -1
                peer_r = 0.0
            else:
                peer = dec.arm.index
                pred, pf, pcell = states[peer].serve_peer_request(
                    x, t, lambda f: predict(peer, f), rng=self._serve[peer]
                )
                peer_r = (1.0 if pred == y else 0.0) - self._own_costs[peer][pf]
            r = (1.0 if pred == y else 0.0) - s.costs[a]
            if views is not None:
                v = views[i]
                best_slot, best_val = v.best_from(acc)
                inst = best_val - v.used_from(acc, a, pf)
            else:
                best_slot, best_val, inst = -1, math.nan, math.nan
            delay = self._draw_delay(i) if self.sc.delay is not None else 0
            item = _Reveal(i, dec.phase, cell, a, r, peer, pcell, pf, peer_r)
            if self.buffered:
                self.buffer.push(t + delay, item)
            else:
                reveals.append(item)
            records.append(
                StepRecord(
                    t_global, i, x, cell, dec.phase, dec.arm, a, pf, pred, y, r,
                    best_slot, best_val, inst, dec.probes, self.epoch,
                    t_global + delay, s.entries,
                )
            )
        if self.buffered:
            reveals = apply_delayed_feedback(self.buffer, t)
        for item in reveals:
            self._apply(item)
        return records

    def _draw_delay(self, learner: int) -> int:
        dl = self.sc.delay
        if dl is None:
            return 0
        if dl.law == "fixed":
            return dl.l_max
        return self._delay[learner].randint(0, dl.l_max)

    def _apply(self, item: _Reveal) -> None:
        st = self.states[item.learner].cell_stats(item.cell)[item.slot]
        if item.phase is TRAIN:
            st.n1 += 1
        else:
            st.fold(item.reward)
        if item.peer >= 0:
            self.states[item.peer].apply_own_feedback(item.peer_cell, item.peer_fn, item.peer_reward)

    def run(self, n_slots: int | None = None) -> list[StepRecord]:
        n_slots = self.horizon if n_slots is None else n_slots
        out: list[StepRecord] = []
        with _gc_paused():
            for _ in range(n_slots):
                recs = self.step()
                if self.exhausted:
                    break
                out.extend(recs)
        for s in self.states:
            if s.entries > s.memory_bound():
                raise InvariantViolation(f"learner {s.id}: {s.entries} stats entries exceed bound")
        return out


def _final_stats(sim: Simulation) -> list[tuple]:
    rows = []
    for s in sim.states:
        for cell in sorted(s.stats):
            for slot, st in enumerate(s.stats[cell]):
                rows.append((sim.epoch, s.id, slot, cell, st.n, st.n1, st.count, st.mean))
    return rows


def run(sc: Scenario, trace: TraceSource | None = None) -> MetricsLog:
    """Run a scenario for its horizon; fully determined by ``sc.seed``."""
    sim = Simulation(sc, trace=trace)
    records = sim.run()
    meta = sim.meta()
    meta.update(
        horizon=sim.t,
        epochs=[(0, 0, sim.t, sim.partition.m, sim.cfg.z)],
        final_stats=_final_stats(sim),
        max_buffer=sim.buffer.max_size,
        pending_dropped=sim.buffer.pending(),
        probes=[s.probes for s in sim.states],
    )
    with _gc_paused():
        return MetricsLog(records, meta)


def doubling_phases(total_T: int) -> list[tuple[int, int, int]]:
    """``(tau, phase_length, slots_used)`` for phases of length 2**tau."""
    if total_T < 2:
        raise ConfigError(f"doubling needs total_T >= 2, got {total_T}")
    out = []
    used = 0
    tau = 1
    while used < total_T:
        length = 2**tau
        n = min(length, total_T - used)
        out.append((tau, length, n))
        used += n
        tau += 1
    return out


def run_doubling(sc: Scenario, total_T: int, trace: TraceSource | None = None) -> MetricsLog:
    """Restart CoS on phases of length 2**tau, each tuned to its own length.

    Control overrides ``z`` and ``m_T`` in the scenario still apply; otherwise
    both are recomputed from the phase length.
    """
    sc = replace(sc, T=total_T)
    streams = Streams(sc.seed, sc.M)
    records: list[StepRecord] = []
    epochs = []
    stats = []
    probes = [0] * sc.M
    max_buffer = 0
    pending = 0
    offset = 0
    for tau, length, n in doubling_phases(total_T):
        sim = Simulation(sc, horizon=length, streams=streams, trace=trace, t_offset=offset, epoch=tau)
        recs = sim.run(n)
        records.extend(recs)
        epochs.append((tau, offset, sim.t, sim.partition.m, sim.cfg.z))
        stats.extend(_final_stats(sim))
        probes = [p + s.probes for p, s in zip(probes, sim.states)]
        max_buffer = max(max_buffer, sim.buffer.max_size)
        pending += sim.buffer.pending()
        offset += sim.t
        if sim.exhausted:
            break
    meta = sim.meta()
    meta.update(
        horizon=offset,
        epochs=epochs,
        final_stats=stats,
        max_buffer=max_buffer,
        pending_dropped=pending,
        probes=probes,
        m_T=None,
        cell_count=None,
    )
    with _gc_paused():
        return MetricsLog(records, meta)
