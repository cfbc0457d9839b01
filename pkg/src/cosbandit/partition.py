"""Uniform hypercube partition of the context space [0, 1]^d.

Cells are addressed by a linear integer index; dimension 0 is the least
significant digit, so ``linear = sum(coords[j] * m**j)``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import ConfigError, DomainError

__all__ = [
    "Partition",
    "HypercubeIndex",
    "build_partition",
    "locate",
    "slicing_parameter",
]


class HypercubeIndex(NamedTuple):
    linear: int
    coords: tuple[int, ...]


@dataclass(frozen=True)
class Partition:
    d: int
    m: int
    cell_count: int

    def locate(self, x: Sequence[float]) -> HypercubeIndex:
        return locate(self, x)

    def cell_of(self, x: Sequence[float]) -> int:
        """Linear index of the cell containing ``x``; no range checking."""
        m = self.m
        if self.d == 1:
            c = int(x[0] * m)
            return c if c < m else m - 1
        linear = 0
        stride = 1
        for v in x:
            c = int(v * m)
            if c >= m:
                c = m - 1
            linear += c * stride
            stride *= m
        return linear

    def coords(self, linear: int) -> tuple[int, ...]:
        if not 0 <= linear < self.cell_count:
            raise DomainError(f"cell index {linear} outside [0, {self.cell_count})")
        out = []
        for _ in range(self.d):
            linear, c = divmod(linear, self.m)
            out.append(c)
        return tuple(out)

    def linear(self, coords: Sequence[int]) -> int:
        if len(coords) != self.d:
            raise DomainError(f"expected {self.d} coordinates, got {len(coords)}")
        linear = 0
        for j in reversed(range(self.d)):
            c = coords[j]
            if not 0 <= c < self.m:
                raise DomainError(f"coordinate {j} = {c} outside [0, {self.m})")
            linear = linear * self.m + c
        return linear

    def bounds(self, linear: int) -> list[tuple[float, float]]:
        """Per-dimension ``(low, high)`` of a cell, recomputed on demand."""
        w = 1.0 / self.m
        return [(c * w, (c + 1) * w) for c in self.coords(linear)]


def build_partition(d: int, m: int) -> Partition:
    if d < 1:
        raise ConfigError(f"context dimension must be >= 1, got d={d}")
    if m < 1:
        raise ConfigError(f"slicing parameter must be >= 1, got m_T={m}")
    count = m**d
    if count > sys.maxsize:
        raise ConfigError(f"m_T^d overflows the index range (m_T={m}, d={d})")
    return Partition(d=d, m=m, cell_count=count)


def locate(p: Partition, x: Sequence[float]) -> HypercubeIndex:
    """Map a context to its cell; 1.0 is clamped into the last slice."""
    if len(x) != p.d:
        raise DomainError(f"context has {len(x)} coordinates, partition expects {p.d}")
    coords = []
    for j, v in enumerate(x):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"context coordinate {j} = {v!r} outside [0, 1]")
        coords.append(min(int(math.floor(v * p.m)), p.m - 1))
    linear = 0
    for c in reversed(coords):
        linear = linear * p.m + c
    return HypercubeIndex(linear, tuple(coords))


def slicing_parameter(T: int, alpha: float, d: int, time_as_context: bool = False) -> int:
    """``ceil(T ** (1 / (3 alpha + d)))``, with one extra dimension for time.

    A relative tolerance of 1e-12 keeps exact powers (e.g. T = 1e8, exponent
    1/4) from being bumped up by floating-point round-off.
    """
    if T < 1:
        raise ConfigError(f"horizon must be >= 1, got T={T}")
    if alpha <= 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    if d < 1:
        raise ConfigError(f"d must be >= 1, got {d}")
    dim = d + 1 if time_as_context else d
    r = float(T) ** (1.0 / (3.0 * alpha + dim))
    return max(1, math.ceil(r * (1.0 - 1e-12)))
