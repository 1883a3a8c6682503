"""Trajectories, deterministic rollouts and return bookkeeping."""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

from .envs import Env
from .policy import PolicyParams, act

_ids = itertools.count()


def discounted_return(rewards, gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    # plain left-to-right sum of gamma**t * r_t, so results do not depend on BLAS ordering
    total = 0.0
    for t, r in enumerate(np.asarray(rewards, dtype=np.float64).ravel().tolist()):
        total += gamma ** t * r
    return total


def reward_to_go(rewards, gamma: float) -> np.ndarray:
    """``g_t = sum_{k >= t} gamma**(k-t) * r_k``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """An episode: ``states[t]`` was seen, ``actions[t]`` taken, ``rewards[t]`` received.

    ``actions`` holds the raw policy output; environments clip it before the
    dynamics, the estimators score the unclipped value.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    gamma: float = 1.0
    behavior_params_id: int = -1
    uid: int = field(default_factory=lambda: next(_ids))

    def __post_init__(self):
        states = np.array(self.states, dtype=np.float64, ndmin=2)
        actions = np.array(self.actions, dtype=np.float64)
        if actions.ndim == 1:
            actions = actions[:, None]
        rewards = np.array(self.rewards, dtype=np.float64).ravel()
        if not (states.shape[0] == actions.shape[0] == rewards.shape[0] >= 1):
            raise ValueError("states, actions and rewards need the same length >= 1")
        for arr in (states, actions, rewards):
            arr.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "discounted_return", discounted_return(rewards, self.gamma))

    def __len__(self) -> int:
        return self.rewards.shape[0]

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


def collect(env: Env, params: PolicyParams, rng: np.random.Generator, gamma: float = 1.0,
            behavior_params_id: int = -1, action_noise=None) -> Trajectory:
    """Roll out ``params`` greedily until the episode ends.

    ``action_noise`` (an ``EvalNoise``) turns the rollout stochastic; the
    deterministic agents never pass it.
    """
    state = env.reset(rng)
    states, actions, rewards = [], [], []
    done = False
    while not done:
        a = act(params, state.obs)
        if action_noise is not None:
            a = a + rng.standard_normal(a.shape) * np.sqrt(action_noise.var)
        states.append(state.obs)
        actions.append(a)
        state, r, done = env.step(state, a)
        rewards.append(r)
    traj = Trajectory(np.array(states), np.array(actions), np.array(rewards), gamma, behavior_params_id)
    if abs(traj.discounted_return) > env.max_return() + 1e-9:
        raise AssertionError("trajectory return exceeds the environment bound")
    return traj


# -- persistence -------------------------------------------------------------
#
# Little-endian binary record file:
#
#   header:  8s  magic  b"DDOPGTRJ"
#            u32 version (1), u32 state_dim, u32 action_dim, f64 gamma, u32 count
#   record:  u32 H, i64 behavior_params_id,
#            H*state_dim f64 states (row-major), H*action_dim f64 actions, H f64 rewards

_MAGIC = b"DDOPGTRJ"
_HEADER = struct.Struct("<8sIIIdI")
_RECORD = struct.Struct("<Iq")


def write_trajectories(fh: BinaryIO, trajs: Iterable[Trajectory], state_dim: int,
                       action_dim: int, gamma: float) -> None:
    trajs = list(trajs)
    fh.write(_HEADER.pack(_MAGIC, 1, state_dim, action_dim, gamma, len(trajs)))
    for tr in trajs:
        if tr.states.shape[1] != state_dim or tr.actions.shape[1] != action_dim:
            raise ValueError("trajectory dimensions do not match the file header")
        fh.write(_RECORD.pack(len(tr), tr.behavior_params_id))
        for arr in (tr.states, tr.actions, tr.rewards):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_trajectories(fh: BinaryIO) -> tuple[list[Trajectory], float]:
    magic, version, sdim, adim, gamma, count = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != _MAGIC or version != 1:
        raise ValueError("not a trajectory record file")
    trajs = []
    for _ in range(count):
        h, pid = _RECORD.unpack(fh.read(_RECORD.size))

        def block(n):
            return np.frombuffer(fh.read(8 * n), dtype="<f8").astype(np.float64)

        states = block(h * sdim).reshape(h, sdim)
        actions = block(h * adim).reshape(h, adim)
        rewards = block(h)
        trajs.append(Trajectory(states, actions, rewards, gamma, pid))
    return trajs, gamma


def save_trajectories(path: str | Path, trajs, state_dim: int, action_dim: int, gamma: float) -> None:
    with open(path, "wb") as fh:
        write_trajectories(fh, trajs, state_dim, action_dim, gamma)


def load_trajectories(path: str | Path) -> tuple[list[Trajectory], float]:
    with open(path, "rb") as fh:
        return read_trajectories(fh)
