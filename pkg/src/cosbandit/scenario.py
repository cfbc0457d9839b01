"""JSON scenario files: loading, validation and serialization.

Minimal example::

    {
      "schema_version": 1,
      "d": 1, "T": 20000, "alpha": 1.0, "F_max": 2, "seed": 0,
      "learners": [
        {"functions": [{"kind": "constant", "p": 0.53, "cost": 0.0},
                       {"kind": "constant", "p": 0.97, "cost": 0.0}],
         "peer_costs": 0.0,
         "arrival": {"kind": "uniform"}}
      ]
    }
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .arms import AccuracyFunction, accuracy_from_dict
from .env import ConcentratedBall, DelaySpec, FromTrace, IIDUniform, LearnerSpec, Scenario
from .errors import ConfigError, ScenarioError

__all__ = ["SCHEMA_VERSION", "validate_scenario", "scenario_from_dict", "scenario_to_dict", "save_scenario"]

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "name", "d", "T", "alpha", "L", "F_max", "seed", "control",
    "delay", "time_as_context", "label_prob", "mode", "trace", "learners",
}


def validate_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file; raises ``ScenarioError`` listing every problem."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([f"{path}: cannot read ({exc.strerror})"]) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
    return scenario_from_dict(raw, base_dir=path.parent)


def _num(raw: dict, key: str, where: str, problems: list[str], kind=float, default=None):
    if key not in raw:
        if default is None:
            problems.append(f"{where}{key}: required")
        return default
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append(f"{where}{key}: expected a number, got {v!r}")
        return default
    if kind is int and int(v) != v:
        problems.append(f"{where}{key}: expected an integer, got {v!r}")
        return default
    return kind(v)


def _arrival(raw: Any, where: str, problems: list[str]):
    if raw is None:
        return IIDUniform()
    kind = raw.get("kind") if isinstance(raw, dict) else None
    if kind == "uniform":
        return IIDUniform()
    if kind == "ball":
        try:
            return ConcentratedBall(tuple(float(c) for c in raw["center"]), float(raw["radius"]))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"{where}arrival: bad ball ({exc})")
            return IIDUniform()
    if kind == "trace":
        return FromTrace()
    problems.append(f"{where}arrival: unknown kind {kind!r}")
    return IIDUniform()


def scenario_from_dict(raw: Any, base_dir: Path | None = None) -> Scenario:
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ScenarioError(["top level must be a JSON object"])
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    for key in sorted(set(raw) - _TOP_KEYS):
        problems.append(f"{key}: unknown field")
    d = _num(raw, "d", "", problems, int, 1)
    T = _num(raw, "T", "", problems, int, 1)
    alpha = _num(raw, "alpha", "", problems, float, 1.0)
    L = _num(raw, "L", "", problems, float, 1.0)
    seed = _num(raw, "seed", "", problems, int, 0)
    label_prob = _num(raw, "label_prob", "", problems, float, 0.5)
    mode = raw.get("mode", "synthetic")
    control = raw.get("control") or {}
    if control == "theorem":
        control = {}
    if not isinstance(control, dict):
        problems.append("control: expected an object or \"theorem\"")
        control = {}
    z = control.get("z")
    m_T = control.get("m_T")
    delay = raw.get("delay")
    delay_spec = None
    if delay is not None:
        try:
            delay_spec = DelaySpec(int(delay.get("l_max", 0)), str(delay.get("law", "fixed")))
        except (AttributeError, ConfigError, TypeError, ValueError) as exc:
            problems.append(f"delay: {exc}")

    learners_raw = raw.get("learners")
    if not isinstance(learners_raw, list) or not learners_raw:
        problems.append("learners: expected a non-empty list")
        learners_raw = []
    M = len(learners_raw)
    learners = []
    for i, lr in enumerate(learners_raw):
        where = f"learners[{i}]."
        if not isinstance(lr, dict):
            problems.append(f"learners[{i}]: expected an object")
            continue
        fns: list[AccuracyFunction | None] = []
        costs: list[float] = []
        for f, fr in enumerate(lr.get("functions") or []):
            fw = f"{where}functions[{f}]."
            if not isinstance(fr, dict):
                problems.append(f"{fw[:-1]}: expected an object")
                continue
            cost = _num(fr, "cost", fw, problems, float, 0.0)
            if not 0.0 <= cost <= 1.0:
                problems.append(f"{fw}cost: cost out of [0,1] ({cost})")
            costs.append(cost)
            if fr.get("kind") == "trace":
                fns.append(None)
                continue
            try:
                fns.append(accuracy_from_dict(fr))
            except (KeyError, TypeError, ValueError) as exc:
                problems.append(f"{fw[:-1]}: {exc}")
                fns.append(None)
        if not fns:
            problems.append(f"{where}functions: expected a non-empty list")
        pc = lr.get("peer_costs", 0.0)
        if isinstance(pc, (int, float)) and not isinstance(pc, bool):
            peer_costs = [float(pc)] * M
        elif isinstance(pc, list) and len(pc) == M:
            peer_costs = [float(c) for c in pc]
        else:
            problems.append(f"{where}peer_costs: expected a number or a list of {M} numbers")
            peer_costs = [0.0] * M
        for k, c in enumerate(peer_costs):
            if k != i and not 0.0 <= c <= 1.0:
                problems.append(f"{where}peer_costs[{k}]: cost out of [0,1] ({c})")
        arrival = _arrival(lr.get("arrival"), where, problems)
        learners.append(LearnerSpec(tuple(fns), tuple(costs), tuple(peer_costs), arrival))

    F_max = _num(raw, "F_max", "", problems, int, max((len(lr.functions) for lr in learners), default=1))
    for i, lr in enumerate(learners):
        if len(lr.functions) > F_max:
            problems.append(
                f"learners[{i}].functions: {len(lr.functions)} functions exceed F_max={F_max}"
            )
    trace_path = raw.get("trace")
    if trace_path is not None and base_dir is not None:
        trace_path = str((base_dir / trace_path).resolve())
    if problems:
        raise ScenarioError(problems)
    kwargs = dict(
        learners=tuple(learners), d=d, T=T, alpha=alpha, L=L, F_max=F_max, seed=seed,
        z=z, m_T=m_T, delay=delay_spec, time_as_context=bool(raw.get("time_as_context", False)),
        label_prob=label_prob, mode=mode, trace_path=trace_path,
    )
    return Scenario(**kwargs)


def scenario_to_dict(sc: Scenario) -> dict:
    def fn_dict(f, c):
        out = {"kind": "trace"} if f is None else f.to_dict()
        out["cost"] = c
        return out

    out: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "d": sc.d,
        "T": sc.T,
        "alpha": sc.alpha,
        "L": sc.L,
        "F_max": sc.F_max,
        "seed": sc.seed,
        "control": {"z": sc.z, "m_T": sc.m_T},
        "delay": None if sc.delay is None else {"l_max": sc.delay.l_max, "law": sc.delay.law},
        "time_as_context": sc.time_as_context,
        "label_prob": sc.label_prob,
        "mode": sc.mode,
        "learners": [
            {
                "functions": [fn_dict(f, c) for f, c in zip(lr.functions, lr.costs)],
                "peer_costs": list(lr.peer_costs),
                "arrival": lr.arrival.to_dict(),
            }
            for lr in sc.learners
        ],
    }
    if sc.trace_path is not None:
        out["trace"] = sc.trace_path
    return out


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2, default=_np_default) + "\n")


def _np_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
