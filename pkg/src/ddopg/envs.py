"""Benchmark environments implemented natively with numpy.

All three share one small interface: ``reset(rng) -> EnvState``,
``step(state, action) -> (EnvState, reward, done)`` and ``max_return()``.
Transitions are deterministic; the only randomness is the initial state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    horizon: int
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]

    def __post_init__(self):
        if min(self.state_dim, self.action_dim, self.horizon) <= 0:
            raise ValueError("dimensions and horizon must be positive")
        if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
            raise ValueError("action bounds do not match action_dim")
        if any(lo >= hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError("action bounds need lo < hi")


@dataclass(frozen=True, eq=False)
class EnvState:
    obs: np.ndarray
    t: int = 0
    done: bool = False


class Env:
    spec: EnvSpec

    def reset(self, rng: np.random.Generator) -> EnvState:
        raise NotImplementedError

    def _transition(self, obs: np.ndarray, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        raise NotImplementedError

    def max_return(self) -> float:
        raise NotImplementedError

    def clip_action(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim)
        return np.clip(a, self.spec.action_low, self.spec.action_high)

    def step(self, state: EnvState, action) -> tuple[EnvState, float, bool]:
        if state.done or state.t >= self.spec.horizon:
            raise RuntimeError("step() called on a finished episode")
        obs, reward, terminal = self._transition(state.obs, self.clip_action(action))
        t = state.t + 1
        done = terminal or t >= self.spec.horizon
        return EnvState(obs, t, done), reward, done


class CartPole(Env):
    """Cart-pole balancing with a continuous force input.

    The action is a normalised command in [-1, 1] scaled to a force of
    +-10 N. Canonical constants (cart 1.0 kg, pole 0.1 kg, half-length
    0.5 m), explicit Euler at dt = 0.02 s. Reward +1 per step; the episode fails when
    the pole leaves +-12 degrees or the cart leaves +-2.4 m.
    """

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    length = 0.5
    dt = 0.02
    force_max = 10.0
    theta_limit = 12.0 * 2.0 * math.pi / 360.0
    x_limit = 2.4
    init_range = 0.05

    def __init__(self, horizon: int = 100):
        self.spec = EnvSpec("cartpole", 4, 1, horizon, (-1.0,), (1.0,))

    def reset(self, rng: np.random.Generator) -> EnvState:
        return EnvState(rng.uniform(-self.init_range, self.init_range, size=4))

    def accelerations(self, obs: np.ndarray, force: float) -> tuple[float, float]:
        _, _, theta, theta_dot = obs
        total_mass = self.masscart + self.masspole
        polemass_length = self.masspole * self.length
        cos, sin = math.cos(theta), math.sin(theta)
        temp = (force + polemass_length * theta_dot ** 2 * sin) / total_mass
        theta_acc = (self.gravity * sin - cos * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * cos ** 2 / total_mass)
        )
        x_acc = temp - polemass_length * theta_acc * cos / total_mass
        return x_acc, theta_acc

    def _transition(self, obs, action):
        x, x_dot, theta, theta_dot = obs
        x_acc, theta_acc = self.accelerations(obs, self.force_max * float(action[0]))
        nxt = np.array([
            x + self.dt * x_dot,
            x_dot + self.dt * x_acc,
            theta + self.dt * theta_dot,
            theta_dot + self.dt * theta_acc,
        ])
        failed = abs(nxt[0]) > self.x_limit or abs(nxt[2]) > self.theta_limit
        return nxt, 1.0, bool(failed)

    def max_return(self) -> float:
        return float(self.spec.horizon)


class MountainCar(Env):
    """Continuous mountain car.

    Reward is ``-0.1 * a**2`` per step on the clipped action plus 100 on
    reaching the goal, which also ends the episode. Returns therefore lie in
    ``[-0.1 * horizon, 100]``.
    """

    min_position = -1.2
    max_position = 0.6
    max_speed = 0.07
    goal_position = 0.45
    power = 0.0015
    goal_reward = 100.0
    action_cost = 0.1

    def __init__(self, horizon: int = 500):
        self.spec = EnvSpec("mountaincar", 2, 1, horizon, (-1.0,), (1.0,))

    def reset(self, rng: np.random.Generator) -> EnvState:
        return EnvState(np.array([rng.uniform(-0.6, -0.4), 0.0]))

    def _transition(self, obs, action):
        position, velocity = obs
        force = float(action[0])
        velocity += force * self.power - 0.0025 * math.cos(3.0 * position)
        velocity = min(max(velocity, -self.max_speed), self.max_speed)
        position += velocity
        position = min(max(position, self.min_position), self.max_position)
        if position == self.min_position and velocity < 0:
            velocity = 0.0
        reached = position >= self.goal_position and velocity >= 0.0
        reward = -self.action_cost * force ** 2 + (self.goal_reward if reached else 0.0)
        return np.array([position, velocity]), reward, bool(reached)

    def max_return(self) -> float:
        return max(self.goal_reward, self.action_cost * self.spec.horizon)


class PointMass(Env):
    """1-D double integrator for oracle tests.

    State ``(x, v)``, init ``(1, 0)``, ``x' = x + dt*v``, ``v' = v + dt*a``,
    reward ``-(x**2 + v**2 + 0.01*a**2)`` evaluated before the transition.
    ``init_noise > 0`` jitters the start position uniformly by that amount,
    which gives estimator fixtures more than one trajectory per policy.
    """

    dt = 0.1
    action_max = 1.0
    action_cost = 0.01

    def __init__(self, horizon: int = 10, init_noise: float = 0.0):
        self.spec = EnvSpec("pointmass", 2, 1, horizon, (-self.action_max,), (self.action_max,))
        self.init_noise = init_noise

    def reset(self, rng: np.random.Generator) -> EnvState:
        x0 = 1.0
        if self.init_noise > 0:
            x0 += rng.uniform(-self.init_noise, self.init_noise)
        return EnvState(np.array([x0, 0.0]))

    def _transition(self, obs, action):
        x, v = obs
        a = float(action[0])
        reward = -(x * x + v * v + self.action_cost * a * a)
        return np.array([x + self.dt * v, v + self.dt * a]), reward, False

    def max_return(self) -> float:
        # |v_t| <= t*dt*a_max and |x_t| <= 1 + dt**2 * a_max * t(t-1)/2
        total = 0.0
        for t in range(self.spec.horizon):
            v_max = t * self.dt * self.action_max
            x_max = 1.0 + self.init_noise + self.dt ** 2 * self.action_max * t * (t - 1) / 2.0
            total += x_max ** 2 + v_max ** 2 + self.action_cost * self.action_max ** 2
        return total


ENVIRONMENTS = {"cartpole": CartPole, "mountaincar": MountainCar, "pointmass": PointMass}


def make_env(name: str, **kwargs) -> Env:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(**kwargs)


def max_return(env: Env) -> float:
    return env.max_return()
