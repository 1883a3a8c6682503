import hypothesis.extra.numpy as hnp
import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from ddopg.numkit import MlpSpec, make_rng
from ddopg.policy import EvalNoise, PolicyParams
from ddopg.replay import ReplayBuffer, softmax_probs
from ddopg.rollout import Trajectory

SPEC = MlpSpec(2, 1, (3,))


def _buffer(returns, temperature=0.1, n_max=50, keep_newest=True, seed=0):
    rng = make_rng(seed)
    buf = ReplayBuffer(temperature, n_max, keep_newest)
    for r in returns:
        h = 3
        tr = Trajectory(rng.normal(size=(h, 2)), rng.normal(size=(h, 1)), [r, 0.0, 0.0])
        buf.push(tr, PolicyParams.random(SPEC, rng))
    return buf


def test_softmax_hand_values():
    # exp(0), exp(1), exp(2) normalised
    np.testing.assert_allclose(softmax_probs([0.0, 0.5, 1.0], 0.5), [0.0900, 0.2447, 0.6652], atol=5e-5)


@given(hnp.arrays(np.float64, st.integers(1, 20), elements=st.floats(0, 1)),
       st.floats(0.01, 10), st.floats(-100, 100))
def test_softmax_shift_invariant_and_normalised(z, lam, c):
    p = softmax_probs(z, lam)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p >= 0)
    np.testing.assert_allclose(softmax_probs(z + c, lam), p, rtol=1e-9, atol=1e-300)


@given(hnp.arrays(np.float64, st.integers(2, 20), elements=st.floats(0, 1), unique=True))
def test_softmax_orders_like_returns(z):
    p = softmax_probs(z, 0.3)
    order = np.argsort(z)
    assert np.all(np.diff(p[order]) >= 0)


def test_normalized_returns_min_max_and_degenerate():
    buf = _buffer([2.0, -1.0, 5.0])
    np.testing.assert_allclose(buf.normalized_returns(), [0.5, 0.0, 1.0])
    flat = _buffer([3.0, 3.0])
    np.testing.assert_array_equal(flat.normalized_returns(), [0.5, 0.5])
    np.testing.assert_allclose(flat.selection_probs(), [0.5, 0.5])


def test_huge_temperature_is_uniform():
    buf = _buffer(np.linspace(-5, 5, 7), temperature=1e9)
    assert np.max(np.abs(buf.selection_probs() - 1 / 7)) < 1e-6


def test_tiny_temperature_picks_argmax():
    buf = _buffer([0.0, 10.0, 5.0], temperature=1e-3, keep_newest=False)
    idx = buf.select(make_rng(1))
    assert np.all(idx == 1)


def test_selection_frequencies_within_three_sigma():
    buf = _buffer([0.0, 1.0, 3.0, 2.0, 2.5], temperature=0.5, n_max=1000, keep_newest=False)
    p = buf.selection_probs()
    rng = make_rng(7)
    counts = np.zeros(5)
    for _ in range(100):
        counts += np.bincount(buf.select(rng), minlength=5)
    n = counts.sum()
    assert n == 100_000
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_newest_always_selected():
    buf = _buffer([10.0, 9.0, 8.0, -50.0], temperature=0.01, n_max=5)
    for s in range(20):
        idx = buf.select(make_rng(s))
        assert len(idx) == 5 and 3 in idx


def test_push_assigns_ids_and_copies_snapshot():
    buf = ReplayBuffer()
    rng = make_rng(0)
    p = PolicyParams.random(SPEC, rng)
    tr = Trajectory(np.zeros((2, 2)), np.zeros((2, 1)), [1.0, 1.0], 0.5)
    assert buf.push(tr, p) == 0 and buf.push(tr, p) == 1
    assert [buf[i].trajectory.behavior_params_id for i in range(2)] == [0, 1]
    assert buf[0].params is not p
    np.testing.assert_array_equal(buf[0].params.theta, p.theta)
    assert buf[1].ret == 1.5


def test_support_multiset_and_cache_reuse():
    buf = _buffer([1.0, 2.0, 3.0])
    noise = EvalNoise.isotropic(0.0, 1)
    s1 = buf.support([0, 2, 2, 1], noise)
    assert len(s1) == 4 and len(s1.unique_keys) == 3
    filled = len(buf.cache)
    assert filled == 9
    buf.support([2, 1], noise)
    assert len(buf.cache) == filled  # all pairs already cached
    # a new noise flushes the cache
    buf.support([0], EvalNoise.isotropic(1.0, 1))
    assert len(buf.cache) == 1


def test_dump_and_load_roundtrip(tmp_path):
    buf = _buffer([1.0, -2.0, 0.5])
    buf.dump(tmp_path / "buf.bin")
    back = ReplayBuffer.load(tmp_path / "buf.bin", buf.temperature, buf.n_max)
    assert len(back) == 3
    np.testing.assert_array_equal(back.returns, buf.returns)
    for a, b in zip(buf._entries, back._entries):
        np.testing.assert_array_equal(a.params.theta, b.params.theta)
        np.testing.assert_array_equal(a.trajectory.states, b.trajectory.states)


def test_invalid_construction():
    with pytest.raises(ValueError):
        ReplayBuffer(0.0)
    with pytest.raises(ValueError):
        ReplayBuffer(0.1, 0)
    with pytest.raises(ValueError):
        ReplayBuffer().selection_probs()
