"""Return and gradient estimators.

On-policy Monte Carlo and REINFORCE estimators, plus the importance-sampling
surrogate for deterministic policies: each stored trajectory is scored under
a Gaussian kernel ``N(a | mu_theta(s), Sigma)`` around the target policy and
divided by the empirical mixture of all behaviour policies in the support.
Everything stays in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .numkit import MlpBatch, forward_and_vjp, log_sum_exp, mlp_forward
from .policy import EvalNoise, PolicyParams, step_log_densities
from .rollout import Trajectory, reward_to_go

NORMALIZATIONS = ("self", "count")


@dataclass
class SurrogateConfig:
    noise: EvalNoise
    normalization: str = "self"
    penalty_factor: float = 0.05
    return_bound: float = 100.0
    delta: float = 0.5

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.penalty_factor < 0 or self.return_bound <= 0:
            raise ValueError("penalty_factor must be >= 0 and return_bound > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


class LogLikCache:
    """Behaviour log-likelihoods keyed by ``(trajectory key, snapshot key)``.

    Bound to one evaluation noise; asking with a different noise flushes it.
    """

    def __init__(self, noise: EvalNoise | None = None):
        self.noise_key = None if noise is None else noise.key
        self.table: dict[tuple[Hashable, Hashable], float] = {}

    def bind(self, noise: EvalNoise) -> None:
        if noise.key != self.noise_key:
            self.table.clear()
            self.noise_key = noise.key

    def __len__(self):
        return len(self.table)


class _Stack:
    """Unique trajectories concatenated row-wise for batched network passes."""

    def __init__(self, trajs: Sequence[Trajectory]):
        self.trajs = list(trajs)
        self.states = np.concatenate([t.states for t in self.trajs])
        self.actions = np.concatenate([t.actions for t in self.trajs])
        lengths = np.array([len(t) for t in self.trajs])
        self.starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        self.row_owner = np.repeat(np.arange(len(self.trajs)), lengths)

    def log_liks(self, means: np.ndarray, noise: EvalNoise) -> np.ndarray:
        return np.add.reduceat(step_log_densities(means, self.actions, noise), self.starts)


class SupportSet:
    """Multiset of ``(trajectory, behaviour snapshot)`` pairs.

    Member ``i`` contributes trajectory ``trajectories[i]`` which was generated
    by ``snapshots[i]``. Duplicated members count with multiplicity in both
    the estimate and the mixture denominator. ``keys`` identify the pairs
    for caching; by default each distinct trajectory object gets its own key.
    ``returns`` overrides the cached discounted returns of the members.
    """

    def __init__(self, trajectories: Sequence[Trajectory], snapshots: Sequence[PolicyParams],
                 noise: EvalNoise, keys: Sequence[Hashable] | None = None,
                 cache: LogLikCache | None = None, returns=None):
        if len(trajectories) == 0 or len(trajectories) != len(snapshots):
            raise ValueError("support needs equally many trajectories and snapshots (>= 1)")
        if keys is None:
            keys = [t.uid for t in trajectories]
        if len(keys) != len(trajectories):
            raise ValueError("one key per member required")
        self.noise = noise
        self.keys = list(keys)
        self.cache = cache if cache is not None else LogLikCache(noise)
        self.cache.bind(noise)

        unique: dict[Hashable, int] = {}
        uniq_trajs, uniq_snaps = [], []
        for key, tr, snap in zip(self.keys, trajectories, snapshots):
            if key not in unique:
                unique[key] = len(uniq_trajs)
                uniq_trajs.append(tr)
                uniq_snaps.append(snap)
        self.unique_keys = list(unique)
        self.member_index = np.array([unique[k] for k in self.keys])
        self.snapshots = uniq_snaps
        self.spec = uniq_snaps[0].spec
        self.stack = _Stack(uniq_trajs)
        self._batch: MlpBatch | None = None
        if returns is None:
            returns = [t.discounted_return for t in trajectories]
        self.returns = np.array(returns, dtype=np.float64)
        if self.returns.shape != (len(self.keys),):
            raise ValueError("one return per member required")
        self._fill_behavior_matrix()

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def trajectories(self) -> list[Trajectory]:
        return [self.stack.trajs[u] for u in self.member_index]

    def _fill_behavior_matrix(self) -> None:
        table = self.cache.table
        n_u = len(self.unique_keys)
        ll = np.empty((n_u, n_u))
        for j, (snap_key, snap) in enumerate(zip(self.unique_keys, self.snapshots)):
            missing = [i for i, k in enumerate(self.unique_keys) if (k, snap_key) not in table]
            if missing:
                means = mlp_forward(snap.spec, snap.theta, self.stack.states)
                col = self.stack.log_liks(means, self.noise)
                for i in missing:
                    table[(self.unique_keys[i], snap_key)] = float(col[i])
            ll[:, j] = [table[(k, snap_key)] for k in self.unique_keys]
        # member i, member j: trajectory of i scored under snapshot of j
        self.behavior_log_lik = ll[np.ix_(self.member_index, self.member_index)]
        self.log_mixture = log_sum_exp(self.behavior_log_lik, axis=1) - math.log(len(self))

    def target_log_lik(self, theta: np.ndarray, with_pullback: bool = False):
        if self._batch is None:
            self._batch = MlpBatch(self.spec, self.stack.states)
        means = self._batch.forward(theta)
        pullback = self._batch.vjp
        per_unique = self.stack.log_liks(means, self.noise)
        per_member = per_unique[self.member_index]
        if not with_pullback:
            return per_member
        resid = (self.stack.actions - means) / self.noise.var

        def grad(member_coef: np.ndarray) -> np.ndarray:
            """``sum_i member_coef[i] * grad log p(tau_i | theta)``."""
            unique_coef = np.bincount(self.member_index, weights=member_coef,
                                      minlength=len(self.unique_keys))
            return pullback(resid * unique_coef[self.stack.row_owner][:, None])

        return per_member, grad


def _theta(target) -> np.ndarray:
    return target.theta if isinstance(target, PolicyParams) else np.asarray(target, dtype=np.float64)


# -- on-policy estimators --------------------------------------------------------


def mc_return(returns) -> float:
    r = np.asarray(returns, dtype=np.float64)
    if r.size == 0:
        raise ValueError("mc_return of an empty batch")
    return float(r.mean())


class LinearFeatureBaseline:
    """Least-squares fit of rewards-to-go on ``[s, s**2, t/H, (t/H)**2, (t/H)**3, 1]``."""

    def __init__(self, horizon: int, reg: float = 1e-5):
        self.horizon = horizon
        self.reg = reg
        self.coef: np.ndarray | None = None

    def features(self, traj: Trajectory) -> np.ndarray:
        s = np.clip(traj.states, -10.0, 10.0)
        t = (np.arange(len(traj)) / self.horizon)[:, None]
        return np.hstack([s, s ** 2, t, t ** 2, t ** 3, np.ones_like(t)])

    def fit(self, trajs: Sequence[Trajectory], targets: Sequence[np.ndarray]) -> None:
        x = np.vstack([self.features(t) for t in trajs])
        y = np.concatenate(targets)
        reg = self.reg
        a = x.T @ x
        for _ in range(5):
            try:
                self.coef = np.linalg.solve(a + reg * np.eye(a.shape[0]), x.T @ y)
                if np.all(np.isfinite(self.coef)):
                    return
            except np.linalg.LinAlgError:
                pass
            reg *= 10.0
        self.coef = np.zeros(x.shape[1])

    def predict(self, traj: Trajectory) -> np.ndarray:
        if self.coef is None:
            return np.zeros(len(traj))
        return self.features(traj) @ self.coef


def reinforce_grad(trajs: Sequence[Trajectory], params: PolicyParams, noise: EvalNoise,
                   baseline: str = "none", use_reward_to_go: bool = True,
                   horizon: int | None = None) -> np.ndarray:
    """Score-function gradient averaged over an on-policy batch.

    With ``use_reward_to_go=False`` and no baseline every step is weighted by
    the full path return.
    """
    if len(trajs) == 0:
        raise ValueError("empty batch")
    if baseline not in ("none", "linear"):
        raise ValueError(f"unknown baseline {baseline!r}")
    if use_reward_to_go:
        targets = [reward_to_go(t.rewards, t.gamma) for t in trajs]
    else:
        targets = [np.full(len(t), t.discounted_return) for t in trajs]
    if baseline == "linear":
        fitted = LinearFeatureBaseline(horizon or max(len(t) for t in trajs))
        fitted.fit(trajs, targets)
        targets = [g - fitted.predict(t) for g, t in zip(targets, trajs)]
    stack = _Stack(trajs)
    means, pullback = forward_and_vjp(params.spec, params.theta, stack.states)
    weights = np.concatenate(targets)[:, None]
    return pullback((stack.actions - means) / noise.var * weights) / len(trajs)


# -- surrogate model -----------------------------------------------------------


@dataclass
class SurrogateEval:
    value: float
    log_weights: np.ndarray
    ess: float
    has_support: bool
    grad: np.ndarray | None = field(default=None, repr=False)


def log_surrogate_weights(support: SupportSet, target, cfg: SurrogateConfig | None = None) -> np.ndarray:
    """``log w_i = log p(tau_i | theta) - log( (1/N) sum_j p(tau_i | theta_j) )``."""
    if cfg is not None and cfg.noise.key != support.noise.key:
        raise ValueError("support was built for a different evaluation noise")
    lw = support.target_log_lik(_theta(target)) - support.log_mixture
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise FloatingPointError("non-finite surrogate log-weights")
    return lw


def effective_sample_size(log_weights) -> float:
    """``1 / sum(wbar**2)`` on sum-normalised weights; 0 when nothing has weight."""
    lw = np.asarray(log_weights, dtype=np.float64)
    if lw.size == 0:
        raise ValueError("effective_sample_size of an empty input")
    if not np.any(np.isfinite(lw)):
        return 0.0
    return _ess_from_log(lw)


def _ess_from_log(lw: np.ndarray) -> float:
    # (sum u)^2 / sum u^2 with u = w / max(w): exact for uniform and one-hot weights
    u = np.exp(lw - np.max(lw))
    return float(u.sum() ** 2 / np.dot(u, u))


def penalty(ess: float, cfg: SurrogateConfig, factor: float | None = None) -> float:
    """``-return_bound * factor / sqrt(ess)``; ``-inf`` without support."""
    factor = cfg.penalty_factor if factor is None else factor
    if factor == 0.0:
        return 0.0
    if ess <= 0.0:
        return -math.inf
    return -cfg.return_bound * factor / math.sqrt(ess)


def _normalized(lw: np.ndarray) -> np.ndarray:
    return np.exp(lw - log_sum_exp(lw))


def evaluate(support: SupportSet, target, cfg: SurrogateConfig, grad: str | None = None) -> SurrogateEval:
    """Surrogate estimate at ``target``.

    ``grad`` selects which gradient to attach: ``"return"`` for the
    surrogate alone, ``"objective"`` for surrogate plus ESS penalty.
    """
    theta = _theta(target)
    if grad is None:
        num = support.target_log_lik(theta)
    else:
        num, pull = support.target_log_lik(theta, with_pullback=True)
    lw = num - support.log_mixture
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise FloatingPointError("non-finite surrogate log-weights")
    returns = support.returns
    n = len(support)
    has_support = bool(np.any(np.isfinite(lw)))
    if not has_support:
        zero = None if grad is None else np.zeros_like(theta)
        return SurrogateEval(0.0, lw, 0.0, False, zero)

    p = _normalized(lw)
    if cfg.normalization == "self":
        value = float(p @ returns)
        coef = p * (returns - value)
    else:
        w = np.exp(lw)
        value = float(w @ returns) / n
        coef = w * returns / n
    ess = _ess_from_log(lw)
    out = SurrogateEval(value, lw, ess, True)
    if grad is None:
        return out
    if grad == "objective" and cfg.penalty_factor > 0.0:
        q = _normalized(2.0 * lw)
        coef = coef + cfg.return_bound * cfg.penalty_factor / math.sqrt(ess) * (p - q)
    elif grad not in ("return", "objective"):
        raise ValueError(f"unknown gradient selector {grad!r}")
    out.grad = pull(coef)
    return out


def surrogate_return(support: SupportSet, target, cfg: SurrogateConfig) -> float:
    return evaluate(support, target, cfg).value


def surrogate_grad(support: SupportSet, target, cfg: SurrogateConfig) -> np.ndarray:
    return evaluate(support, target, cfg, grad="return").grad


def penalized_objective(support: SupportSet, target, cfg: SurrogateConfig,
                        with_grad: bool = True) -> SurrogateEval:
    """Surrogate plus ESS penalty; ``value`` holds the penalised objective."""
    ev = evaluate(support, target, cfg, grad="objective" if with_grad else None)
    ev.value = ev.value + penalty(ev.ess, cfg)
    return ev


def lower_bound(support: SupportSet, target, cfg: SurrogateConfig, use_delta: bool = False) -> float:
    """Surrogate minus the ESS confidence term.

    ``use_delta=True`` sets the penalty factor to ``sqrt((1 - delta) / delta)``
    instead of ``cfg.penalty_factor``.
    """
    ev = evaluate(support, target, cfg)
    factor = math.sqrt((1.0 - cfg.delta) / cfg.delta) if use_delta else cfg.penalty_factor
    return ev.value + penalty(ev.ess, cfg, factor)
