"""Trajectory replay buffer with softmax selection over normalised returns."""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimators import LogLikCache, SupportSet
from .policy import EvalNoise, PolicyParams, format_params, parse_params
from .rollout import Trajectory, read_trajectories, write_trajectories


@dataclass(frozen=True, eq=False)
class Entry:
    trajectory: Trajectory
    params: PolicyParams
    ret: float


class ReplayBuffer:
    """Unbounded store of ``(trajectory, behaviour snapshot, return)``.

    The buffer index doubles as the trajectory's ``behavior_params_id`` and
    as the cache key of the pair.
    """

    def __init__(self, temperature: float = 0.1, n_max: int = 50, keep_newest: bool = True):
        if temperature <= 0 or n_max <= 0:
            raise ValueError("temperature and n_max must be positive")
        self.temperature = temperature
        self.n_max = n_max
        self.keep_newest = keep_newest
        self._entries: tuple[Entry, ...] = ()
        self._lock = threading.Lock()
        self.cache = LogLikCache()

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, i: int) -> Entry:
        return self._entries[i]

    def push(self, traj: Trajectory, params: PolicyParams) -> int:
        idx = len(self._entries)
        if traj.behavior_params_id != idx:
            traj = Trajectory(traj.states, traj.actions, traj.rewards, traj.gamma, idx)
        entry = Entry(traj, PolicyParams(np.array(params.theta), params.spec), traj.discounted_return)
        with self._lock:
            # readers keep whichever tuple they already hold
            self._entries = self._entries + (entry,)
        return idx

    @property
    def returns(self) -> np.ndarray:
        return np.array([e.ret for e in self._entries])

    def normalized_returns(self) -> np.ndarray:
        r = self.returns
        lo, hi = r.min(), r.max()
        if hi == lo:
            return np.full(r.shape, 0.5)
        return (r - lo) / (hi - lo)

    def selection_probs(self) -> np.ndarray:
        if len(self) == 0:
            raise ValueError("empty buffer")
        return softmax_probs(self.normalized_returns(), self.temperature)

    def select(self, rng: np.random.Generator) -> np.ndarray:
        """``n_max`` i.i.d. indices; the newest entry replaces the last draw if absent."""
        probs = self.selection_probs()
        idx = rng.choice(len(probs), size=self.n_max, replace=True, p=probs)
        newest = len(probs) - 1
        if self.keep_newest and newest not in idx:
            idx[-1] = newest
        return idx

    def support(self, indices, noise: EvalNoise) -> SupportSet:
        entries = self._entries
        idx = [int(i) for i in indices]
        return SupportSet([entries[i].trajectory for i in idx], [entries[i].params for i in idx],
                          noise, keys=idx, cache=self.cache)

    # -- persistence -----------------------------------------------------------
    #
    # Trajectory record file (see rollout) followed by
    #   u32 count, then per entry: u32 byte length + policy text block (utf-8)

    def dump(self, path: str | Path) -> None:
        entries = self._entries
        if not entries:
            raise ValueError("nothing to dump")
        first = entries[0].trajectory
        with open(path, "wb") as fh:
            write_trajectories(fh, [e.trajectory for e in entries], first.states.shape[1],
                               first.actions.shape[1], first.gamma)
            fh.write(struct.pack("<I", len(entries)))
            for e in entries:
                blob = format_params(e.params).encode()
                fh.write(struct.pack("<I", len(blob)))
                fh.write(blob)

    @classmethod
    def load(cls, path: str | Path, temperature: float = 0.1, n_max: int = 50) -> "ReplayBuffer":
        buf = cls(temperature, n_max)
        with open(path, "rb") as fh:
            trajs, _ = read_trajectories(fh)
            (count,) = struct.unpack("<I", fh.read(4))
            if count != len(trajs):
                raise ValueError("snapshot count does not match trajectory count")
            for tr in trajs:
                (size,) = struct.unpack("<I", fh.read(4))
                buf.push(tr, parse_params(fh.read(size).decode()))
        return buf


def softmax_probs(normalized_returns, temperature: float) -> np.ndarray:
    z = np.asarray(normalized_returns, dtype=np.float64) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()
