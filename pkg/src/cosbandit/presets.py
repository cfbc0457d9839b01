"""Ready-made scenarios used by the examples, tests and the acceptance suite."""

from __future__ import annotations

import random

from .arms import Constant, HolderBump
from .env import ConcentratedBall, DelaySpec, FromTrace, IIDUniform, LearnerSpec, Scenario
from .trace import TraceRow, write_trace

__all__ = ["CONSTANT_FOUR_ERRORS", "constant_four", "holder_family", "write_synthetic_trace"]

# error percentages of each learner's two functions
CONSTANT_FOUR_ERRORS = ((47, 3), (53, 4), (47, 47), (47, 47))


def constant_four(T: int = 20000, seed: int = 0, **overrides) -> Scenario:
    """Four learners, two constant-accuracy functions each, all costs zero."""
    learners = tuple(
        LearnerSpec(
            functions=tuple(Constant(1 - e / 100) for e in errs),
            costs=(0.0, 0.0),
            peer_costs=(0.0,) * 4,
        )
        for errs in CONSTANT_FOUR_ERRORS
    )
    return Scenario(learners=learners, d=1, T=T, alpha=1.0, F_max=2, seed=seed, **overrides)


# (base, amplitude, center) for each learner's first function, constant for the second
_BUMPS = (
    ((0.45, 0.45, 0.15), (0.5, 0.3, 0.55)),
    ((0.45, 0.45, 0.85), 0.6),
    ((0.40, 0.45, 0.35), 0.55),
    ((0.40, 0.45, 0.70), 0.5),
)


def holder_family(
    T: int = 100_000,
    seed: int = 0,
    arrival=None,
    **overrides,
) -> Scenario:
    """d = 1, alpha = 1, L = 1, four learners with two functions each.

    Each learner's best function is a Lipschitz bump, so the optimal arm
    (own function or peer) changes across the context space.
    """
    arrival = IIDUniform() if arrival is None else arrival
    learners = []
    for spec in _BUMPS:
        fns = []
        for f in spec:
            if isinstance(f, tuple):
                b, a, c = f
                fns.append(HolderBump(b, a, (c,), alpha=1.0, L=1.0))
            else:
                fns.append(Constant(f))
        learners.append(LearnerSpec(tuple(fns), (0.0, 0.0), (0.0,) * 4, arrival))
    return Scenario(learners=tuple(learners), d=1, T=T, alpha=1.0, L=1.0, F_max=2, seed=seed, **overrides)


def write_synthetic_trace(
    path,
    T: int,
    accuracies=((0.5, 0.97), (0.5, 0.5), (0.5, 0.5), (0.5, 0.5)),
    seed: int = 0,
    d: int = 1,
) -> list[tuple[int, int]]:
    """Write a trace whose prediction columns are correct with fixed probabilities."""
    rng = random.Random(seed)
    columns = [(i, f) for i, accs in enumerate(accuracies) for f in range(len(accs))]
    rows = []
    for t in range(T):
        x = tuple(rng.random() for _ in range(d))
        y = 1 if rng.random() < 0.5 else 0
        preds = tuple(y if rng.random() < accuracies[i][f] else 1 - y for i, f in columns)
        rows.append(TraceRow(t, x, y, preds))
    write_trace(path, rows, d, columns)
    return columns


def trace_scenario(functions_per_learner=(2, 2, 2, 2), T: int = 20000, **overrides) -> Scenario:
    M = len(functions_per_learner)
    learners = tuple(
        LearnerSpec((None,) * n, (0.0,) * n, (0.0,) * M, FromTrace()) for n in functions_per_learner
    )
    return Scenario(learners=learners, d=1, T=T, mode="trace", **overrides)
