"""Arms, ground-truth accuracy functions and rewards.

An arm of learner ``i`` is either one of its own classification functions or
a peer learner. Accuracy functions map a context to the probability that the
function labels the instance correctly.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "OWN",
    "PEER",
    "ArmId",
    "CostedArm",
    "AccuracyFunction",
    "Constant",
    "HolderBump",
    "PiecewiseGrid",
    "TimeLinear",
    "HolderReport",
    "synth_accuracy",
    "sample_prediction",
    "reward",
    "validate_holder",
]

OWN = "own"
PEER = "peer"


class ArmId(NamedTuple):
    """``kind`` is ``"own"`` (index = function index) or ``"peer"`` (index = learner)."""

    kind: str
    index: int

    def __str__(self) -> str:
        return f"{self.kind}:{self.index}"


@dataclass(frozen=True)
class CostedArm:
    id: ArmId
    cost: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.cost <= 1.0:
            raise ValueError(f"cost out of [0,1]: {self.cost}")


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


class AccuracyFunction:
    """Base class. Subclasses are immutable and deterministic."""

    def __call__(self, x: Sequence[float]) -> float:  # pragma: no cover
        raise NotImplementedError

    def batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate on the rows of an ``(n, d)`` array."""
        return np.array([self(tuple(r)) for r in X.tolist()], dtype=float)

    def to_dict(self) -> dict:  # pragma: no cover
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(AccuracyFunction):
    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"accuracy out of [0,1]: {self.p}")

    def __call__(self, x: Sequence[float]) -> float:
        return self.p

    def batch(self, X: np.ndarray) -> np.ndarray:
        return np.full(len(X), self.p)

    def to_dict(self) -> dict:
        return {"kind": "constant", "p": self.p}


@dataclass(frozen=True)
class HolderBump(AccuracyFunction):
    """``clamp(base + amplitude - L * |x - center|**alpha, 0, 1)``.

    With ``|amplitude| <= L * sqrt(d)**alpha`` and ``alpha <= 1`` the result is
    (L, alpha)-Hölder on the unit cube by construction.
    """

    base: float
    amplitude: float
    center: tuple[float, ...]
    alpha: float = 1.0
    L: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        d = len(self.center)
        if d < 1:
            raise ValueError("center must have at least one coordinate")
        if self.alpha <= 0 or self.L < 0:
            raise ValueError("need alpha > 0 and L >= 0")
        if abs(self.amplitude) > self.L * math.sqrt(d) ** self.alpha + 1e-12:
            raise ValueError(
                f"|amplitude| = {abs(self.amplitude)} exceeds L * sqrt(d)^alpha"
            )
        object.__setattr__(self, "_peak", self.base + self.amplitude)

    def __call__(self, x: Sequence[float]) -> float:
        c = self.center
        if len(c) == 1:
            dist = abs(x[0] - c[0])
        else:
            dist = math.dist(x, c)
        v = self._peak - self.L * (dist if self.alpha == 1.0 else dist**self.alpha)
        return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)

    def batch(self, X: np.ndarray) -> np.ndarray:
        if len(self.center) == 1:
            dist = np.abs(X[:, 0] - self.center[0])
        else:
            dist = np.array([math.dist(r, self.center) for r in X.tolist()])
        if self.alpha != 1.0:
            # libm pow, bit-identical to the scalar path
            a = self.alpha
            dist = np.array([v**a for v in dist.tolist()])
        return np.clip(self._peak - self.L * dist, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "kind": "holder_bump",
            "base": self.base,
            "amplitude": self.amplitude,
            "center": list(self.center),
            "alpha": self.alpha,
            "L": self.L,
        }


@dataclass(frozen=True)
class PiecewiseGrid(AccuracyFunction):
    """Multilinear interpolation of values on a regular grid over [0, 1]^d.

    ``values`` has shape ``(n,) * d`` with ``n >= 2``; node ``k`` of an axis
    sits at ``k / (n - 1)``.
    """

    values: np.ndarray = field(compare=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 1 or any(s != v.shape[0] for s in v.shape) or v.shape[0] < 2:
            raise ValueError("grid values must have shape (n,)*d with n >= 2")
        v = np.clip(v, 0.0, 1.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_flat", v.ravel(order="C").tolist())

    @property
    def d(self) -> int:
        return self.values.ndim

    def __call__(self, x: Sequence[float]) -> float:
        n = self.values.shape[0]
        d = self.values.ndim
        flat = self._flat
        if d == 1:
            u = x[0] * (n - 1)
            k = min(int(u), n - 2)
            w = u - k
            return _clamp01(flat[k] * (1.0 - w) + flat[k + 1] * w)
        lows = []
        weights = []
        for j in range(d):
            u = x[j] * (n - 1)
            k = min(int(u), n - 2)
            lows.append(k)
            weights.append(u - k)
        total = 0.0
        # C-order flattening: axis 0 is the most significant.
        for corner in range(1 << d):
            w = 1.0
            offset = 0
            for j in range(d):
                bit = (corner >> j) & 1
                w *= weights[j] if bit else 1.0 - weights[j]
                offset = offset * n + lows[j] + bit
            total += w * flat[offset]
        return _clamp01(total)

    def to_dict(self) -> dict:
        return {"kind": "grid", "values": self.values.tolist()}


@dataclass(frozen=True)
class TimeLinear(AccuracyFunction):
    """Accuracy growing linearly in the last context coordinate (normalized time).

    Models an online-learning classifier whose accuracy is non-decreasing in
    time; Hölder with ``alpha = 1`` and ``L = |end - start|``.
    """

    start: float
    end: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.start <= 1.0 and 0.0 <= self.end <= 1.0):
            raise ValueError("start and end must lie in [0,1]")

    def __call__(self, x: Sequence[float]) -> float:
        return self.start + (self.end - self.start) * x[-1]

    def batch(self, X: np.ndarray) -> np.ndarray:
        return self.start + (self.end - self.start) * X[:, -1]

    def to_dict(self) -> dict:
        return {"kind": "time_linear", "start": self.start, "end": self.end}


def synth_accuracy(f: AccuracyFunction, x: Sequence[float]) -> float:
    return f(x)


def sample_prediction(
    rng: random.Random, f: AccuracyFunction, x: Sequence[float], y: int
) -> int:
    """Return ``y`` with probability ``f(x)``, otherwise ``1 - y``. One draw."""
    return y if rng.random() < f(x) else 1 - y


def reward(prediction: int, y: int, cost: float) -> float:
    return (1.0 if prediction == y else 0.0) - cost


@dataclass
class HolderReport:
    max_ratio: float
    passed: bool
    n_pairs: int
    worst_pair: tuple[tuple[float, ...], tuple[float, ...]] | None = None


def validate_holder(
    f: AccuracyFunction,
    L: float,
    alpha: float,
    n_pairs: int,
    rng: np.random.Generator,
    d: int = 1,
) -> HolderReport:
    """Empirical Hölder check on random context pairs.

    Half of the pairs are independent uniform points; the other half are local
    perturbations at log-uniform scales, which is where steep segments show up.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    n_far = (n_pairs + 1) // 2
    a = rng.random((n_pairs, d))
    b = np.empty_like(a)
    b[:n_far] = rng.random((n_far, d))
    n_near = n_pairs - n_far
    if n_near:
        scale = 10.0 ** rng.uniform(-4.0, -1.0, size=(n_near, 1))
        step = rng.normal(size=(n_near, d))
        b[n_far:] = np.clip(a[n_far:] + scale * step, 0.0, 1.0)
    worst = 0.0
    worst_pair = None
    for u, v in zip(a, b):
        dist = float(np.linalg.norm(u - v))
        if dist == 0.0:
            continue
        xu, xv = tuple(u.tolist()), tuple(v.tolist())
        ratio = abs(f(xu) - f(xv)) / dist**alpha
        if ratio > worst:
            worst, worst_pair = ratio, (xu, xv)
    return HolderReport(
        max_ratio=worst,
        passed=worst <= L * (1.0 + 1e-9),
        n_pairs=n_pairs,
        worst_pair=worst_pair,
    )


def accuracy_from_dict(spec: dict) -> AccuracyFunction:
    kind = spec.get("kind")
    if kind == "constant":
        return Constant(float(spec["p"]))
    if kind == "holder_bump":
        return HolderBump(
            base=float(spec["base"]),
            amplitude=float(spec["amplitude"]),
            center=tuple(spec["center"]),
            alpha=float(spec.get("alpha", 1.0)),
            L=float(spec.get("L", 1.0)),
        )
    if kind == "grid":
        return PiecewiseGrid(np.asarray(spec["values"], dtype=float))
    if kind == "time_linear":
        return TimeLinear(float(spec["start"]), float(spec["end"]))
    raise ValueError(f"unknown accuracy kind {kind!r}")
