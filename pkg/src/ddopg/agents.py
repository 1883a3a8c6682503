"""Outer training loops: DD-OPG and the REINFORCE baseline."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .envs import Env
from .estimators import SurrogateConfig, reinforce_grad
from .numkit import MlpSpec, make_rng
from .optim import AdamState, InnerLoopConfig, adam_step, optimize_lower_bound
from .policy import EvalNoise, PolicyParams
from .replay import ReplayBuffer
from .rollout import collect

# rng streams per seed
ENV_STREAM, INIT_STREAM, SELECT_STREAM, EXPLORE_STREAM = 0, 1, 2, 3


@dataclass
class LearningCurve:
    iteration: list[int] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    returns: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def append(self, iteration: int, steps: int, ret: float, seconds: float) -> None:
        if self.steps and steps <= self.steps[-1]:
            raise ValueError("cumulative steps must strictly increase")
        self.iteration.append(iteration)
        self.steps.append(steps)
        self.returns.append(float(ret))
        self.seconds.append(float(seconds))

    def __len__(self) -> int:
        return len(self.iteration)

    def first_reaching(self, threshold: float) -> float:
        """Environment steps at which the return first reaches ``threshold`` (inf if never)."""
        for s, r in zip(self.steps, self.returns):
            if r >= threshold:
                return float(s)
        return math.inf

    def trailing_mean(self, window: int) -> float:
        """Mean of the last ``window`` returns (fewer at the start)."""
        if not self.returns:
            return -math.inf
        return float(np.mean(self.returns[-window:]))

    def smoothed(self, window: int) -> "LearningCurve":
        """Copy whose returns are trailing means over ``window`` points."""
        out = LearningCurve(list(self.iteration), list(self.steps), [], list(self.seconds))
        r = np.asarray(self.returns, dtype=np.float64)
        c = np.concatenate([[0.0], np.cumsum(r)])
        for i in range(len(r)):
            lo = max(0, i + 1 - window)
            out.returns.append(float((c[i + 1] - c[lo]) / (i + 1 - lo)))
        return out

    def area(self, max_steps: float) -> float:
        """Trapezoidal area under return vs. steps on ``[0, max_steps]``.

        The curve is held flat before its first point and after its last.
        """
        grid = np.linspace(0.0, max_steps, 2001)
        vals = np.interp(grid, self.steps, self.returns)
        return float(np.trapezoid(vals, grid))


def _policy_spec(env: Env, hidden) -> MlpSpec:
    return MlpSpec(env.spec.state_dim, env.spec.action_dim, tuple(hidden))


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.t0 = time.perf_counter()

    def __call__(self) -> float:
        return time.perf_counter() - self.t0 if self.enabled else 0.0


@dataclass
class DdopgConfig:
    temperature: float = 0.1
    penalty: float = 0.05
    log_var: float = 3.0
    n_max: int = 50
    gamma: float = 0.99
    max_iters: int = 1000
    max_steps: int | None = None
    inner_steps: int = 200
    lr: float = 0.01
    grad_tol: float = 1e-6
    improve_tol: float = 1e-8
    patience: int = 10
    warmup_iters: int = 5
    warmup_inner_steps: int = 10
    normalization: str = "self"
    explore_std: float = 0.1
    hidden: tuple[int, ...] = (32, 32)
    # stop once the mean of the last ``target_window`` returns reaches this
    target_return: float | None = None
    target_window: int = 10

    def __post_init__(self):
        positive = (self.temperature, self.n_max, self.max_iters, self.inner_steps, self.lr,
                    self.target_window)
        if min(positive) <= 0 or self.penalty < 0 or not 0.0 <= self.gamma <= 1.0:
            raise ValueError("invalid DD-OPG configuration")

    def inner_loop(self, iteration: int) -> InnerLoopConfig:
        steps = self.inner_steps
        if iteration < self.warmup_iters:
            steps = min(steps, self.warmup_inner_steps)
        return InnerLoopConfig(max_iters=steps, lr=self.lr, grad_tol=self.grad_tol,
                               improve_tol=self.improve_tol, patience=self.patience)


def ddopg_run(env: Env, cfg: DdopgConfig, seed: int, record_time: bool = True,
              callback: Callable | None = None) -> LearningCurve:
    """Deterministic rollout, buffer update, softmax replay, full surrogate optimisation; repeat."""
    clock = _Clock(record_time)
    spec = _policy_spec(env, cfg.hidden)
    params = PolicyParams.random(spec, make_rng(seed, INIT_STREAM))
    env_rng = make_rng(seed, ENV_STREAM)
    select_rng = make_rng(seed, SELECT_STREAM)
    explore_rng = make_rng(seed, EXPLORE_STREAM)
    noise = EvalNoise.isotropic(cfg.log_var, env.spec.action_dim)
    surrogate = SurrogateConfig(noise, cfg.normalization, cfg.penalty, env.max_return())
    buffer = ReplayBuffer(cfg.temperature, cfg.n_max)
    curve = LearningCurve()
    steps = 0
    for it in range(cfg.max_iters):
        traj = collect(env, params, env_rng, cfg.gamma, behavior_params_id=len(buffer))
        buffer.push(traj, params)
        steps += len(traj)
        support = buffer.support(buffer.select(select_rng), noise)
        result = optimize_lower_bound(params, support, surrogate, cfg.inner_loop(it))
        if callback is not None:
            callback(it, buffer, support, result)
        params = result.params
        if _single_policy(support, params):
            # every residual is zero, so is the gradient: step off in parameter space
            params = params.with_theta(params.theta + cfg.explore_std * explore_rng.standard_normal(spec.num_params))
        curve.append(it, steps, traj.total_reward, clock())
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            break
        if cfg.target_return is not None and curve.trailing_mean(cfg.target_window) >= cfg.target_return:
            break
    return curve


def _single_policy(support, params: PolicyParams) -> bool:
    return all(np.array_equal(s.theta, params.theta) for s in support.snapshots)


@dataclass
class ReinforceConfig:
    batch_steps: int = 5000
    step_size: float = 0.03
    log_var: float = 0.0
    baseline: str = "linear"
    gamma: float = 0.99
    max_iters: int = 100
    max_steps: int | None = None
    hidden: tuple[int, ...] = (32, 32)
    # stop once a batch-mean return reaches this
    target_return: float | None = None

    def __post_init__(self):
        if self.batch_steps < 1 or self.step_size < 0 or self.max_iters < 1:
            raise ValueError("invalid REINFORCE configuration")
        if self.baseline not in ("none", "linear"):
            raise ValueError(f"unknown baseline {self.baseline!r}")

    def episodes_per_batch(self, horizon: int) -> int:
        return max(1, math.ceil(self.batch_steps / horizon))


def reinforce_run(env: Env, cfg: ReinforceConfig, seed: int, record_time: bool = True,
                  callback: Callable | None = None) -> LearningCurve:
    """Gaussian-exploration REINFORCE with reward-to-go and an Adam step per batch."""
    clock = _Clock(record_time)
    spec = _policy_spec(env, cfg.hidden)
    params = PolicyParams.random(spec, make_rng(seed, INIT_STREAM))
    env_rng = make_rng(seed, ENV_STREAM)
    noise = EvalNoise.isotropic(cfg.log_var, env.spec.action_dim)
    adam = AdamState.fresh(spec.num_params, lr=cfg.step_size)
    n_episodes = cfg.episodes_per_batch(env.spec.horizon)
    curve = LearningCurve()
    steps = 0
    for it in range(cfg.max_iters):
        batch = [collect(env, params, env_rng, cfg.gamma, action_noise=noise) for _ in range(n_episodes)]
        steps += sum(len(t) for t in batch)
        grad = reinforce_grad(batch, params, noise, cfg.baseline, horizon=env.spec.horizon)
        if callback is not None:
            callback(it, batch, params, grad)
        adam, theta = adam_step(adam, params.theta, grad)
        params = params.with_theta(theta)
        curve.append(it, steps, float(np.mean([t.total_reward for t in batch])), clock())
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            break
        if cfg.target_return is not None and curve.returns[-1] >= cfg.target_return:
            break
    return curve
