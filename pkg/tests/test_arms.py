import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cosbandit.arms import (
    OWN,
    PEER,
    ArmId,
    Constant,
    CostedArm,
    HolderBump,
    PiecewiseGrid,
    TimeLinear,
    accuracy_from_dict,
    reward,
    sample_prediction,
    synth_accuracy,
    validate_holder,
)


def test_constant_accuracy_from_table_one():
    # 3 percent errors
    f = Constant(1 - 3 / 100)
    assert synth_accuracy(f, (0.1,)) == pytest.approx(0.97)
    assert synth_accuracy(f, (0.9,)) == pytest.approx(0.97)


def test_holder_bump_zero_amplitude_is_flat():
    f = HolderBump(0.5, 0.0, (0.3,), L=0.0)
    for x in (0.0, 0.3, 1.0):
        assert f((x,)) == 0.5


def test_holder_bump_value_at_center():
    f = HolderBump(0.2, 0.6, (0.5,), alpha=1.0, L=1.0)
    assert f((0.5,)) == pytest.approx(0.8)
    assert f((0.0,)) == pytest.approx(0.3)


def test_holder_bump_amplitude_bound():
    with pytest.raises(ValueError):
        HolderBump(0.0, 1.5, (0.5,), alpha=1.0, L=1.0)
    HolderBump(0.0, 1.4, (0.5, 0.5), alpha=1.0, L=1.0)  # sqrt(2) >= 1.4


@given(
    base=st.floats(-1, 2),
    amp=st.floats(-1, 1),
    c=st.floats(0, 1),
    x=st.floats(0, 1),
)
def test_accuracy_is_a_probability(base, amp, c, x):
    assert 0.0 <= HolderBump(base, amp, (c,))((x,)) <= 1.0


@pytest.mark.parametrize(
    "f",
    [
        HolderBump(0.3, 0.5, (0.4,), alpha=1.0, L=1.0),
        HolderBump(0.1, 0.7, (0.2, 0.8), alpha=0.5, L=2.0),
        PiecewiseGrid(np.array([0.1, 0.4, 0.2, 0.9])),
        PiecewiseGrid(np.arange(16.0).reshape(4, 4) / 15),
        TimeLinear(0.4, 0.9),
    ],
)
def test_batch_matches_scalar_exactly(f):
    d = f.values.ndim if isinstance(f, PiecewiseGrid) else (
        len(f.center) if isinstance(f, HolderBump) else 2)
    X = np.random.default_rng(1).random((257, d))
    got = f.batch(X)
    want = [f(tuple(r)) for r in X.tolist()]
    assert got.tolist() == want


def test_piecewise_grid_interpolates():
    f = PiecewiseGrid(np.array([0.0, 1.0]))
    assert f((0.25,)) == pytest.approx(0.25)
    g = PiecewiseGrid(np.array([[0.0, 1.0], [1.0, 1.0]]))
    # bilinear: 0*(1-u)(1-v) + 1*(1-u)v + 1*u(1-v) + 1*uv
    u, v = 0.3, 0.6
    assert g((u, v)) == pytest.approx((1 - u) * v + u * (1 - v) + u * v)


def test_sample_prediction_extremes(rng):
    assert all(sample_prediction(rng, Constant(1.0), (0.5,), 1) == 1 for _ in range(1000))
    assert all(sample_prediction(rng, Constant(0.0), (0.5,), 1) == 0 for _ in range(1000))


def test_sample_prediction_frequency():
    rng = random.Random(3)
    n = 100_000
    hits = sum(sample_prediction(rng, Constant(0.75), (0.2,), 0) == 0 for _ in range(n))
    assert abs(hits / n - 0.75) <= 0.01


def test_sample_prediction_consumes_one_draw():
    a, b = random.Random(9), random.Random(9)
    sample_prediction(a, Constant(0.3), (0.5,), 1)
    b.random()
    assert a.getstate() == b.getstate()


def test_sample_prediction_deterministic():
    f = HolderBump(0.2, 0.6, (0.5,))
    seq = lambda: [sample_prediction(random.Random(4), f, (x / 50,), x % 2) for x in range(50)]
    assert seq() == seq()


def test_bernoulli_concentration():
    rng = random.Random(11)
    p, n, trials = 0.3, 1000, 200
    band = 3 * math.sqrt(p * (1 - p) / n)
    ok = 0
    for _ in range(trials):
        freq = sum(sample_prediction(rng, Constant(p), (0.0,), 1) == 1 for _ in range(n)) / n
        ok += abs(freq - p) <= band
    assert ok / trials >= 0.99


@pytest.mark.parametrize(
    "pred,y,cost,expected",
    [(1, 1, 0.0, 1.0), (0, 1, 0.2, -0.2), (1, 1, 0.2, 0.8), (0, 0, 1.0, 0.0)],
)
def test_reward_examples(pred, y, cost, expected):
    assert reward(pred, y, cost) == pytest.approx(expected)


@given(pred=st.integers(0, 1), y=st.integers(0, 1), cost=st.floats(0, 1))
def test_reward_bounds(pred, y, cost):
    r = reward(pred, y, cost)
    assert -1.0 <= r <= 1.0
    if r == 1.0:
        assert pred == y and cost < 1e-15


def test_costed_arm_range():
    CostedArm(ArmId(PEER, 2), 0.3)
    with pytest.raises(ValueError, match="cost out of"):
        CostedArm(ArmId(OWN, 0), 1.5)


def test_validate_holder_constant_passes():
    rep = validate_holder(Constant(0.4), L=0.1, alpha=0.5, n_pairs=500, rng=np.random.default_rng(0))
    assert rep.max_ratio == 0.0 and rep.passed


def test_validate_holder_bump_passes_own_constants():
    for alpha, L, d in [(1.0, 1.0, 1), (0.5, 2.0, 2), (1.0, 0.7, 3)]:
        f = HolderBump(0.3, 0.4, (0.5,) * d, alpha=alpha, L=L)
        rep = validate_holder(f, L=L, alpha=alpha, n_pairs=10_000, rng=np.random.default_rng(1), d=d)
        assert rep.passed, rep


def test_validate_holder_detects_step():
    # adjacent grid values differ by 1 over spacing 0.2: slope 5 > L = 1
    f = PiecewiseGrid(np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]))
    rep = validate_holder(f, L=1.0, alpha=1.0, n_pairs=2000, rng=np.random.default_rng(2))
    assert not rep.passed
    assert 1.0 < rep.max_ratio <= 5.0 + 1e-9


def test_accuracy_round_trip_through_dict():
    for f in [Constant(0.3), HolderBump(0.1, 0.5, (0.2, 0.4)), TimeLinear(0.2, 0.8)]:
        assert accuracy_from_dict(f.to_dict()) == f
    g = PiecewiseGrid(np.array([0.1, 0.5]))
    assert accuracy_from_dict(g.to_dict())((0.5,)) == g((0.5,))
