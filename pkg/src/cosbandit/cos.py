"""Per-learner CoS bookkeeping: counters, sample means and the
train / explore / exploit decision rule.

Arms of a learner are indexed densely: own functions first
(``0 .. F_i - 1``), then peers in increasing learner order.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from .arms import OWN, PEER, ArmId
from .errors import ConfigError, InvariantViolation
from .partition import HypercubeIndex, Partition

__all__ = [
    "Phase",
    "ControlConfig",
    "Thresholds",
    "control_thresholds",
    "ArmStats",
    "Decision",
    "Underexplored",
    "LearnerState",
]


class Phase(enum.IntEnum):
    TRAIN = 0
    EXPLORE = 1
    EXPLOIT = 2

    @property
    def label(self) -> str:
        return self.name.lower()


TRAIN, EXPLORE, EXPLOIT = Phase.TRAIN, Phase.EXPLORE, Phase.EXPLOIT


@dataclass(frozen=True)
class ControlConfig:
    """Exploration exponent ``z``, partition exponent ``gamma`` and ``F_max``.

    ``D1(t) = t**z * ln t``, ``D2 = F_max * D1``, ``D3 = D1``.
    """

    z: float
    gamma: float
    F_max: int
    horizon: int
    use_natural_log: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.z < 1.0:
            raise ConfigError(f"z must lie in (0,1), got {self.z}")
        if self.gamma <= 0.0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.F_max < 1:
            raise ConfigError(f"F_max must be >= 1, got {self.F_max}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not self.use_natural_log:
            raise ConfigError("only the natural logarithm is supported")

    @classmethod
    def theorem_defaults(
        cls, alpha: float, d: int, F_max: int, horizon: int, time_as_context: bool = False
    ) -> "ControlConfig":
        dim = d + 1 if time_as_context else d
        denom = 3.0 * alpha + dim
        return cls(z=2.0 * alpha / denom, gamma=1.0 / denom, F_max=F_max, horizon=horizon)


class Thresholds(NamedTuple):
    d1: float
    d2: float
    d3: float


def control_thresholds(t: int, cfg: ControlConfig) -> Thresholds:
    if t < 1:
        raise ValueError(f"slot index must be >= 1, got {t}")
    d1 = t**cfg.z * math.log(t)
    return Thresholds(d1, cfg.F_max * d1, d1)


class ArmStats:
    """Counters and sample mean for one (arm, cell) pair.

    ``n`` is N_{k,l} for own arms and N_{2,k,l} for peers; ``n1`` is the local
    estimate of N_{1,k,l} (peers only). ``mean`` is ``None`` until the first
    reward is folded in.
    """

    __slots__ = ("n", "n1", "mean", "count")

    def __init__(self) -> None:
        self.n = 0
        self.n1 = 0
        self.mean: float | None = None
        self.count = 0

    def fold(self, r: float) -> None:
        c = self.count
        self.mean = r if c == 0 else (c * self.mean + r) / (c + 1)
        self.count = c + 1
        self.n += 1

    def __repr__(self) -> str:
        return f"ArmStats(n={self.n}, n1={self.n1}, mean={self.mean}, count={self.count})"


@dataclass(slots=True)
class Decision:
    phase: Phase
    arm: ArmId
    arm_index: int
    cell: int
    synced_peer_count: int | None = None
    probes: int = 0

    @property
    def hypercube(self) -> int:
        return self.cell


class Underexplored(NamedTuple):
    own_explore: list[ArmId]
    peer_train: list[ArmId]
    peer_explore: list[ArmId]

    def empty(self) -> bool:
        return not (self.own_explore or self.peer_train or self.peer_explore)


PeerProbe = Callable[[int, int], int]


class LearnerState:
    """Complete CoS state of one learner.

    ``stats`` maps a cell index to the list of ``ArmStats`` of all arms in
    that cell; cells are instantiated on first use.
    """

    def __init__(
        self,
        learner_id: int,
        own_costs: Sequence[float],
        peer_costs: dict[int, float],
        partition: Partition,
        cfg: ControlConfig,
        rng: random.Random | None = None,
    ) -> None:
        if not own_costs:
            raise ConfigError(f"learner {learner_id} has no classification functions")
        if len(own_costs) > cfg.F_max:
            raise ConfigError(
                f"learner {learner_id} has {len(own_costs)} functions but F_max={cfg.F_max}"
            )
        self.id = learner_id
        self.partition = partition
        self.cfg = cfg
        self.rng = rng if rng is not None else random.Random(learner_id)
        self.n_own = len(own_costs)
        self.peer_ids = sorted(peer_costs)
        self.arms: list[ArmId] = [ArmId(OWN, f) for f in range(self.n_own)] + [
            ArmId(PEER, k) for k in self.peer_ids
        ]
        self.costs: list[float] = list(own_costs) + [peer_costs[k] for k in self.peer_ids]
        self.n_arms = len(self.arms)
        self._arm_index = {a: j for j, a in enumerate(self.arms)}
        self.stats: dict[int, list[ArmStats]] = {}
        self.arrivals: dict[int, int] = {}
        self.entries = 0
        self.probes = 0
        self._th_t = 0
        self._th = Thresholds(0.0, 0.0, 0.0)

    # -- bookkeeping ------------------------------------------------------
    def arm_index(self, arm: ArmId) -> int:
        return self._arm_index[arm]

    def cell_stats(self, cell: int) -> list[ArmStats]:
        st = self.stats.get(cell)
        if st is None:
            st = [ArmStats() for _ in range(self.n_arms)]
            self.stats[cell] = st
            self.entries += self.n_arms
        return st

    def thresholds(self, t: int) -> Thresholds:
        if t != self._th_t:
            self._th = control_thresholds(t, self.cfg)
            self._th_t = t
        return self._th

    def record_arrival(self, cell: int) -> None:
        self.arrivals[cell] = self.arrivals.get(cell, 0) + 1

    def arrival_count(self, cell: int) -> int:
        return self.arrivals.get(cell, 0)

    def memory_bound(self) -> int:
        return self.n_arms * self.partition.cell_count

    # -- decision rule ----------------------------------------------------
    def underexplored_set(self, cell: int, t: int, th: Thresholds | None = None) -> Underexplored:
        if th is None:
            th = self.thresholds(t)
        st = self.stats.get(cell)
        if st is None:
            st = [ArmStats() for _ in range(self.n_arms)]
        own = [self.arms[a] for a in range(self.n_own) if st[a].n <= th.d1]
        train = [self.arms[a] for a in range(self.n_own, self.n_arms) if st[a].n1 <= th.d2]
        explore = [self.arms[a] for a in range(self.n_own, self.n_arms) if st[a].n <= th.d3]
        return Underexplored(own, train, explore)

    def decide(
        self,
        cell: int,
        t: int,
        peer_counter_probe: PeerProbe,
        rng: random.Random | None = None,
        th: Thresholds | None = None,
    ) -> Decision:
        """Choose the arm for an own arrival in ``cell`` at slot ``t``.

        ``peer_counter_probe(peer_id, cell)`` returns the peer's arrival count
        N^k_l; it is only called for peers whose local training counter is at
        or below D2.
        """
        rng = rng if rng is not None else self.rng
        if th is None:
            th = self.thresholds(t)
        d1, d2, d3 = th
        st = self.cell_stats(cell)
        n_own = self.n_own

        cands = [a for a in range(n_own) if st[a].n <= d1]
        if cands:
            a = cands[0] if len(cands) == 1 else rng.choice(cands)
            return Decision(EXPLORE, self.arms[a], a, cell)

        cands = [a for a in range(n_own, self.n_arms) if st[a].n1 <= d2]
        probes = 0
        synced = None
        if cands:
            if len(cands) > 1:
                rng.shuffle(cands)
            for a in cands:
                s = st[a]
                nk = peer_counter_probe(self.arms[a].index, cell)
                probes += 1
                s.n1 = nk - s.n
                if s.n1 < 0:
                    raise InvariantViolation(
                        f"peer count {nk} below local N2={s.n} (learner {self.id}, arm {a})"
                    )
                if s.n1 <= d2:
                    self.probes += probes
                    return Decision(TRAIN, self.arms[a], a, cell, nk, probes)
                synced = nk
            self.probes += probes

        cands = [a for a in range(n_own, self.n_arms) if st[a].n <= d3]
        if cands:
            a = cands[0] if len(cands) == 1 else rng.choice(cands)
            return Decision(EXPLORE, self.arms[a], a, cell, synced, probes)

        a = _argmax(st, 0, self.n_arms, rng)
        return Decision(EXPLOIT, self.arms[a], a, cell, synced, probes)

    # -- updates ----------------------------------------------------------
    def apply_train(self, decision: Decision, reward_observed: float) -> None:
        """Training: the reward is received but not used for estimation."""
        if decision.phase is not TRAIN:
            raise InvariantViolation(f"apply_train on a {decision.phase.label} decision")
        self.cell_stats(decision.cell)[decision.arm_index].n1 += 1

    def apply_reward_update(self, decision: Decision, reward: float) -> None:
        if decision.phase is TRAIN:
            raise InvariantViolation("apply_reward_update on a train decision")
        self.cell_stats(decision.cell)[decision.arm_index].fold(reward)

    def apply_own_feedback(self, cell: int, fn: int, reward: float) -> None:
        """Fold a forwarded label for a request this learner served."""
        self.cell_stats(cell)[fn].fold(reward)

    # -- serving peers ----------------------------------------------------
    def serve_peer_request(
        self,
        x: Sequence[float],
        t: int,
        predict: Callable[[int], int],
        rng: random.Random | None = None,
    ) -> tuple[int, int, int]:
        """Label a request from another learner using own functions only.

        ``predict(fn)`` produces the label of own function ``fn`` for the
        request. Returns ``(prediction, fn, cell)``.
        """
        rng = rng if rng is not None else self.rng
        cell = self.partition.cell_of(x)
        self.arrivals[cell] = self.arrivals.get(cell, 0) + 1
        st = self.cell_stats(cell)
        d1 = self.thresholds(t).d1
        cands = [f for f in range(self.n_own) if st[f].n <= d1]
        if cands:
            f = cands[0] if len(cands) == 1 else rng.choice(cands)
        else:
            f = _argmax(st, 0, self.n_own, rng)
        return predict(f), f, cell

    def hypercube(self, x: Sequence[float]) -> HypercubeIndex:
        return self.partition.locate(x)


def _argmax(st: list[ArmStats], lo: int, hi: int, rng: random.Random) -> int:
    best = None
    ties: list[int] = []
    for a in range(lo, hi):
        m = st[a].mean
        if m is None:
            raise InvariantViolation(f"exploiting arm {a} with no samples")
        if best is None or m > best:
            best = m
            ties = [a]
        elif m == best:
            ties.append(a)
    return ties[0] if len(ties) == 1 else rng.choice(ties)
