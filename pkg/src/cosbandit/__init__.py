"""Distributed contextual-bandit classification (Classify or Send for Classification)."""

from .arms import ArmId, Constant, HolderBump, PiecewiseGrid, TimeLinear
from .cos import ControlConfig, LearnerState, Phase, control_thresholds
from .env import (
    ConcentratedBall,
    DelaySpec,
    IIDUniform,
    LearnerSpec,
    MetricsLog,
    Scenario,
    Simulation,
    run,
    run_doubling,
)
from .oracle import build_views, error_rate_metrics, optimal_arm, pseudo_regret
from .partition import build_partition, locate, slicing_parameter

__version__ = "0.1.0"
