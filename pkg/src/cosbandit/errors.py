"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid scenario or run configuration."""


class DomainError(ValueError):
    """A value lies outside the domain an operation accepts."""


class TraceParseError(ValueError):
    """A trace row could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class TraceSchemaError(ValueError):
    """The trace header does not match the scenario."""


class UnsupportedModeError(RuntimeError):
    """Operation requires ground-truth accuracies, which trace mode lacks."""


class InvariantViolation(RuntimeError):
    """A runtime invariant failed. Always indicates a bug."""


class ScenarioError(ConfigError):
    """Aggregated scenario validation report."""

    def __init__(self, problems: list[str]) -> None:
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))
