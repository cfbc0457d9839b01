"""Replay of precomputed classifier outputs from a CSV trace.

Header: ``t,ctx_0,...,ctx_{d-1},label,pred_<learner>_<fn>,...`` with 0-based
learner and function indices. One row per slot, ``t`` strictly increasing.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence, TextIO

from .errors import TraceParseError, TraceSchemaError

__all__ = ["TraceRow", "TraceSource", "open_trace", "trace_next", "write_trace"]

_PRED = re.compile(r"^pred_(\d+)_(\d+)$")


@dataclass(frozen=True)
class TraceRow:
    t: int
    context: tuple[float, ...]
    true_label: int
    predictions: tuple[int, ...]


class TraceSource:
    """Sequential reader. ``columns`` lists ``(learner, fn)`` in header order."""

    def __init__(self, fh: TextIO, d: int, functions_per_learner: Sequence[int] | None = None):
        self._fh = fh
        self._reader = csv.reader(fh)
        self.d = d
        self._line = 1
        self._last_t: int | None = None
        try:
            header = next(self._reader)
        except StopIteration:
            raise TraceSchemaError("trace file is empty (no header)") from None
        header = [h.strip() for h in header]
        expected = ["t"] + [f"ctx_{j}" for j in range(d)] + ["label"]
        if header[: d + 2] != expected:
            raise TraceSchemaError(
                f"header must start with {','.join(expected)}, got {','.join(header[: d + 2])}"
            )
        cols = []
        for name in header[d + 2 :]:
            m = _PRED.match(name)
            if m is None:
                raise TraceSchemaError(f"unexpected column {name!r}")
            cols.append((int(m.group(1)), int(m.group(2))))
        if len(set(cols)) != len(cols):
            raise TraceSchemaError("duplicate prediction columns")
        self.columns: list[tuple[int, int]] = cols
        self._col_index = {c: k for k, c in enumerate(cols)}
        if functions_per_learner is not None:
            missing = [
                f"pred_{i}_{f}"
                for i, n in enumerate(functions_per_learner)
                for f in range(n)
                if (i, f) not in self._col_index
            ]
            if missing:
                raise TraceSchemaError("missing prediction columns: " + ", ".join(missing))

    def column(self, learner: int, fn: int) -> int:
        return self._col_index[(learner, fn)]

    def next(self) -> TraceRow | None:
        for raw in self._reader:
            self._line += 1
            if not raw or all(not c.strip() for c in raw):
                continue
            return self._parse(raw)
        return None

    def __iter__(self) -> Iterator[TraceRow]:
        while (row := self.next()) is not None:
            yield row

    def _parse(self, raw: list[str]) -> TraceRow:
        line = self._line
        d = self.d
        width = d + 2 + len(self.columns)
        if len(raw) != width:
            raise TraceParseError(f"expected {width} fields, got {len(raw)}", line)
        try:
            t = int(raw[0])
        except ValueError:
            raise TraceParseError(f"bad slot index {raw[0]!r}", line) from None
        if self._last_t is None:
            if t < 0:
                raise TraceParseError(f"slot index must be >= 0, got {t}", line)
        elif t <= self._last_t:
            raise TraceParseError(f"slot index {t} not increasing", line)
        ctx = []
        for j in range(d):
            try:
                v = float(raw[1 + j])
            except ValueError:
                raise TraceParseError(f"bad context value {raw[1 + j]!r}", line) from None
            if not 0.0 <= v <= 1.0:
                raise TraceParseError(f"context ctx_{j} = {v} out of range [0,1]", line)
            ctx.append(v)
        labels = []
        for k, cell in enumerate(raw[d + 1 :]):
            cell = cell.strip()
            if cell not in ("0", "1"):
                name = "label" if k == 0 else "pred_%d_%d" % self.columns[k - 1]
                raise TraceParseError(f"{name} must be 0 or 1, got {cell!r}", line)
            labels.append(int(cell))
        self._last_t = t
        return TraceRow(t=t, context=tuple(ctx), true_label=labels[0], predictions=tuple(labels[1:]))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TraceSource":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_trace(
    path: str | Path, d: int, functions_per_learner: Sequence[int] | None = None
) -> TraceSource:
    fh = open(path, newline="", encoding="utf-8")
    try:
        return TraceSource(fh, d, functions_per_learner)
    except Exception:
        fh.close()
        raise


def trace_next(src: TraceSource) -> TraceRow | None:
    """Next row in file order, or ``None`` at end of stream."""
    return src.next()


def write_trace(
    path: str | Path, rows: Sequence[TraceRow], d: int, columns: Sequence[tuple[int, int]]
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["t"] + [f"ctx_{j}" for j in range(d)] + ["label"]
            + [f"pred_{i}_{f}" for i, f in columns]
        )
        for r in rows:
            w.writerow([r.t, *(repr(float(c)) for c in r.context), r.true_label, *r.predictions])
