import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from ddopg.envs import CartPole, EnvState, MountainCar, PointMass, make_env, max_return
from ddopg.numkit import make_rng


def _cartpole_lagrangian_step(obs, force, dt=0.02, mc=1.0, mp=0.1, l=0.5, g=9.8):
    """Independent oracle: solve the cart-pole equations of motion as a 2x2 linear system.

    Pole modelled as a uniform rod of half-length ``l`` (inertia about the
    centre ``mp l^2 / 3``), frictionless. One explicit Euler step.
    """
    x, xd, th, thd = obs
    c, s = math.cos(th), math.sin(th)
    mass = np.array([[mc + mp, mp * l * c],
                     [c, 4.0 / 3.0 * l]])
    rhs = np.array([force + mp * l * thd ** 2 * s, g * s])
    xdd, thdd = np.linalg.solve(mass, rhs)
    return np.array([x + dt * xd, xd + dt * xdd, th + dt * thd, thd + dt * thdd])


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-0.2, 0.2), st.floats(-2, 2), st.floats(-1, 1))
def test_cartpole_step_matches_equations_of_motion(x, xd, th, thd, a):
    env = CartPole()
    obs = np.array([x, xd, th, thd])
    nxt, _, _ = env.step(EnvState(obs), np.array([a]))
    np.testing.assert_allclose(nxt.obs, _cartpole_lagrangian_step(obs, 10.0 * a), rtol=1e-10, atol=1e-12)


def test_cartpole_upright_equilibrium_is_fixed():
    env = CartPole()
    s, r, done = env.step(EnvState(np.zeros(4)), np.array([0.0]))
    np.testing.assert_array_equal(s.obs, np.zeros(4))
    assert r == 1.0 and not done


def test_cartpole_failure_and_horizon():
    env = CartPole(horizon=3)
    tilted = np.array([0.0, 0.0, 0.21, 0.0])  # beyond 12 degrees after one step
    s, _, done = env.step(EnvState(tilted), np.array([0.0]))
    assert done
    with pytest.raises(RuntimeError):
        env.step(s, np.array([0.0]))
    s = env.reset(make_rng(0))
    for _ in range(3):
        s, r, done = env.step(s, np.array([0.0]))
    assert done and s.t == 3


def test_cartpole_action_clipped_to_unit_interval():
    env = CartPole()
    s0 = EnvState(np.zeros(4))
    big, _, _ = env.step(s0, np.array([5.0]))
    one, _, _ = env.step(s0, np.array([1.0]))
    np.testing.assert_array_equal(big.obs, one.obs)


def test_cartpole_reset_range():
    env = CartPole()
    rng = make_rng(3)
    obs = np.array([env.reset(rng).obs for _ in range(200)])
    assert np.all(np.abs(obs) <= 0.05)
    assert max_return(env) == 100.0


def test_mountaincar_reset_range():
    env = MountainCar()
    rng = make_rng(4)
    obs = np.array([env.reset(rng).obs for _ in range(200)])
    assert np.all((obs[:, 0] >= -0.6) & (obs[:, 0] <= -0.4)) and np.all(obs[:, 1] == 0.0)
    assert max_return(env) == 100.0


@pytest.mark.parametrize("name", ["cartpole", "mountaincar", "pointmass"])
def test_same_seed_same_initial_state(name):
    env = make_env(name)
    np.testing.assert_array_equal(env.reset(make_rng(9)).obs, env.reset(make_rng(9)).obs)
    assert env.reset(make_rng(9)).t == 0


def test_mountaincar_goal_terminates_with_bonus():
    env = MountainCar()
    s, r, done = env.step(EnvState(np.array([0.449, 0.02])), np.array([0.5]))
    assert done
    assert r == pytest.approx(100.0 - 0.1 * 0.25)


def test_mountaincar_left_wall_stops_car():
    env = MountainCar()
    s, _, _ = env.step(EnvState(np.array([-1.19, -0.05])), np.array([-1.0]))
    assert s.obs[0] == -1.2 and s.obs[1] == 0.0


def test_mountaincar_gym_dynamics():
    env = MountainCar()
    p, v, a = -0.5, 0.01, 0.3
    s, r, _ = env.step(EnvState(np.array([p, v])), np.array([a]))
    v2 = v + a * 0.0015 - 0.0025 * math.cos(3 * p)
    np.testing.assert_allclose(s.obs, [p + v2, v2], rtol=1e-14)
    assert r == pytest.approx(-0.1 * a * a)


def test_pointmass_zero_policy_return():
    # x stays 1, v stays 0: reward -1 per step
    env = PointMass(horizon=10)
    s = env.reset(make_rng(0))
    total = 0.0
    while not s.done:
        s, r, _ = env.step(s, np.array([0.0]))
        total += r
    assert total == -10.0


def test_pointmass_transition_and_reward_order():
    env = PointMass()
    s, r, _ = env.step(EnvState(np.array([0.5, -0.2])), np.array([0.4]))
    np.testing.assert_allclose(s.obs, [0.5 - 0.02, -0.2 + 0.04])
    assert r == pytest.approx(-(0.25 + 0.04 + 0.01 * 0.16))


def test_pointmass_bound_is_tight_for_full_throttle():
    env = PointMass(horizon=10)
    bound = env.max_return()
    for a in (-1.0, 1.0):
        s, total = env.reset(make_rng(0)), 0.0
        while not s.done:
            s, r, _ = env.step(s, np.array([a]))
            total += r
        assert abs(total) <= bound * (1 + 1e-12)
        if a > 0:
            # pushing away from the origin attains the bound
            assert abs(total) == pytest.approx(bound, rel=1e-12)


def test_registry():
    assert isinstance(make_env("cartpole"), CartPole)
    assert make_env("pointmass", horizon=5).spec.horizon == 5
    with pytest.raises(ValueError):
        make_env("swimmer")
