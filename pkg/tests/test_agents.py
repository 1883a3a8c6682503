import math

import numpy as np
import pytest

from ddopg.agents import DdopgConfig, LearningCurve, ReinforceConfig, ddopg_run, reinforce_run
from ddopg.envs import CartPole, PointMass
from ddopg.estimators import reinforce_grad
from ddopg.numkit import make_rng
from ddopg.policy import EvalNoise
from ddopg.rollout import collect


def test_ddopg_defaults():
    cfg = DdopgConfig()
    assert (cfg.temperature, cfg.penalty, cfg.log_var, cfg.n_max) == (0.1, 0.05, 3.0, 50)
    assert (cfg.inner_steps, cfg.lr, cfg.grad_tol, cfg.improve_tol) == (200, 0.01, 1e-6, 1e-8)
    with pytest.raises(ValueError):
        DdopgConfig(temperature=0.0)
    with pytest.raises(ValueError):
        DdopgConfig(gamma=1.5)


def test_reinforce_defaults():
    cfg = ReinforceConfig()
    assert cfg.batch_steps == 5000 and cfg.step_size == 0.03
    assert cfg.episodes_per_batch(100) == 50 and cfg.episodes_per_batch(300) == 17
    with pytest.raises(ValueError):
        ReinforceConfig(baseline="critic")
    with pytest.raises(ValueError):
        ReinforceConfig(batch_steps=0)


def test_warmup_inner_loop_budget():
    cfg = DdopgConfig()
    assert cfg.inner_loop(0).max_iters == 10
    assert cfg.inner_loop(4).max_iters == 10
    assert cfg.inner_loop(5).max_iters == 200
    assert DdopgConfig(inner_steps=1).inner_loop(0).max_iters == 1


# -- learning curve ------------------------------------------------------------


def test_curve_bookkeeping():
    c = LearningCurve()
    c.append(0, 10, 1.0, 0.0)
    c.append(1, 25, 3.0, 0.1)
    with pytest.raises(ValueError):
        c.append(2, 25, 3.0, 0.2)
    assert len(c) == 2
    assert c.first_reaching(2.0) == 25 and c.first_reaching(5.0) == math.inf
    assert c.trailing_mean(1) == 3.0 and c.trailing_mean(10) == 2.0


def test_curve_area_hand_values():
    flat = LearningCurve([0], [1], [4.0], [0.0])
    assert flat.area(100.0) == pytest.approx(400.0)
    ramp = LearningCurve([0, 1], [0, 100], [0.0, 1.0], [0.0, 0.0])
    assert ramp.area(100.0) == pytest.approx(50.0)
    # held flat after the last point
    assert ramp.area(200.0) == pytest.approx(150.0)


def test_curve_smoothing():
    c = LearningCurve([0, 1, 2, 3], [1, 2, 3, 4], [0.0, 2.0, 4.0, 6.0], [0.0] * 4)
    assert c.smoothed(2).returns == [0.0, 1.0, 3.0, 5.0]
    assert c.smoothed(2).steps == c.steps


# -- DD-OPG outer loop -----------------------------------------------------------


def _trace_ddopg(env, cfg, seed=0):
    trace = []

    def cb(it, buffer, support, result):
        trace.append((it, len(buffer), sorted(set(support.keys)), len(support), result,
                      len(buffer[len(buffer) - 1].trajectory)))

    curve = ddopg_run(env, cfg, seed, record_time=False, callback=cb)
    return curve, trace


def test_ddopg_accounting_on_cartpole():
    cfg = DdopgConfig(max_iters=8, n_max=6)
    curve, trace = _trace_ddopg(CartPole(), cfg)
    assert len(curve) == 8 and curve.iteration == list(range(8))
    lengths = [t[5] for t in trace]
    # exactly one episode per iteration
    np.testing.assert_array_equal(np.diff([0] + curve.steps), lengths)
    for it, size, keys, n, _, _ in trace:
        assert size == it + 1           # buffer grows by one
        assert n == 6                   # multiset of n_max draws
        assert it in keys               # newest rollout always selected
    # deterministic rollouts: the recorded return is the episode length
    assert curve.returns == [float(x) for x in lengths]
    assert all(s == 0.0 for s in curve.seconds)


def test_first_iteration_is_single_sample():
    curve, trace = _trace_ddopg(CartPole(), DdopgConfig(max_iters=2))
    it, size, keys, n, result, _ = trace[0]
    assert size == 1 and keys == [0]
    # one trajectory: no surrogate gradient, no penalty gradient, so no step
    assert result.iterations == 0
    # the parameter-space perturbation still moves the next rollout's policy
    assert trace[1][1] == 2


def test_ddopg_is_deterministic():
    cfg = DdopgConfig(max_iters=6)
    a, _ = _trace_ddopg(CartPole(), cfg, seed=3)
    b, _ = _trace_ddopg(CartPole(), cfg, seed=3)
    c, _ = _trace_ddopg(CartPole(), cfg, seed=4)
    assert a.returns == b.returns and a.steps == b.steps
    assert a.steps != c.steps or a.returns != c.returns


def test_uniform_replay_at_huge_temperature():
    probs = []

    def cb(it, buffer, support, result):
        probs.append(buffer.selection_probs())

    ddopg_run(CartPole(), DdopgConfig(max_iters=5, temperature=1e9), 0, False, cb)
    for k, p in enumerate(probs, start=1):
        np.testing.assert_allclose(p, np.full(k, 1.0 / k), atol=1e-6)


def test_ddopg_step_budget_and_target_stop():
    curve = ddopg_run(PointMass(), DdopgConfig(max_iters=100, max_steps=35), 0, False)
    assert curve.steps[-1] == 40 and len(curve) == 4
    # a trivially low target stops after one iteration
    curve = ddopg_run(PointMass(), DdopgConfig(max_iters=100, target_return=-1e9), 0, False)
    assert len(curve) == 1


def test_ddopg_reports_undiscounted_return():
    trajs = []
    cfg = DdopgConfig(max_iters=3, gamma=0.5)
    curve = ddopg_run(PointMass(), cfg, 0, False, lambda it, buf, sup, res: trajs.append(buf[it].trajectory))
    for r, tr in zip(curve.returns, trajs):
        assert r == tr.total_reward
        assert tr.gamma == 0.5 and tr.discounted_return != r


# -- REINFORCE ---------------------------------------------------------------------


def test_reinforce_accounting_and_wiring():
    env = CartPole()
    cfg = ReinforceConfig(batch_steps=500, max_iters=3)
    noise = EvalNoise.isotropic(cfg.log_var, 1)
    seen = []

    def cb(it, batch, params, grad):
        assert len(batch) == 5
        np.testing.assert_array_equal(grad, reinforce_grad(batch, params, noise, "linear", horizon=100))
        seen.append((sum(len(t) for t in batch), np.mean([t.total_reward for t in batch]), params))

    curve = reinforce_run(env, cfg, 1, False, cb)
    np.testing.assert_array_equal(np.diff([0] + curve.steps), [s[0] for s in seen])
    assert curve.returns == [s[1] for s in seen]
    assert not np.array_equal(seen[0][2].theta, seen[-1][2].theta)


def test_reinforce_zero_step_size_keeps_parameters():
    thetas = []
    cfg = ReinforceConfig(batch_steps=200, max_iters=3, step_size=0.0)
    reinforce_run(CartPole(), cfg, 0, False, lambda it, b, p, g: thetas.append(p.theta))
    for th in thetas[1:]:
        np.testing.assert_array_equal(th, thetas[0])


def test_reinforce_training_improves_deterministic_return():
    env = CartPole()
    params = []
    reinforce_run(env, ReinforceConfig(max_iters=5), 404, False, lambda it, b, p, g: params.append(p))

    def evaluate(p):
        return np.mean([collect(env, p, make_rng(99, k)).total_reward for k in range(10)])

    assert evaluate(params[-1]) > evaluate(params[0])
