"""Regret growth with the small exploration exponent used in the experiments.

Not an acceptance criterion. With z = 1/8 the control thresholds stay well
below the per-cell arrival counts at T = 1e5, so exploitation dominates and
the fitted slope shows the sublinear regime that the theorem defaults only
reach at much longer horizons.
"""

import numpy as np
import pytest

from cosbandit.env import run
from cosbandit.presets import holder_family

from reconstruct import loglog_slope

pytestmark = pytest.mark.slow


def test_small_exponent_regret_is_sublinear():
    T = 100_000
    curves = [
        run(holder_family(T=T, seed=s, z=0.125)).cum_regret.reshape(-1, 4).mean(axis=1)
        for s in range(5)
    ]
    slope = loglog_slope(np.arange(1, T + 1), np.mean(curves, axis=0))
    assert slope <= 0.75
