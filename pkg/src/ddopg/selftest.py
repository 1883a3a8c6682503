"""Quick oracle and finite-difference checks runnable from an installed package."""
from __future__ import annotations

import numpy as np

from .envs import PointMass
from .estimators import (SupportSet, SurrogateConfig, effective_sample_size,
                         log_surrogate_weights, surrogate_grad, surrogate_return)
from .numkit import MlpSpec, finite_diff_grad, init_params, make_rng, mlp_forward, mlp_vjp
from .policy import EvalNoise, PolicyParams, traj_log_lik, traj_log_lik_grad
from .replay import softmax_probs
from .rollout import Trajectory, collect


def _rel_err(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def _check_vjp(rng) -> float:
    spec = MlpSpec(3, 2, (5, 4))
    theta = rng.normal(size=spec.num_params)
    x, v = rng.normal(size=3), rng.normal(size=2)
    fd = finite_diff_grad(lambda p: float(v @ mlp_forward(spec, p, x)), theta, 1e-6)
    return _rel_err(mlp_vjp(spec, theta, x, v), fd)


def _check_loglik_grad(rng) -> float:
    spec = MlpSpec(4, 1, (8, 8))
    params = PolicyParams(rng.normal(size=spec.num_params) * 0.5, spec)
    traj = Trajectory(rng.normal(size=(10, 4)), rng.normal(size=(10, 1)), np.ones(10))
    noise = EvalNoise.isotropic(0.3, 1)
    fd = finite_diff_grad(lambda p: traj_log_lik(params.with_theta(p), noise, traj), params.theta, 1e-5)
    return _rel_err(traj_log_lik_grad(params, noise, traj), fd)


def _pointmass_support(rng, horizon=5, n_policies=3, n_traj=8, log_var=-1.0):
    env = PointMass(horizon)
    spec = MlpSpec(2, 1, (6,))
    policies = [PolicyParams(init_params(spec, rng) * 2.0, spec) for _ in range(n_policies)]
    trajs, snaps = [], []
    for i in range(n_traj):
        p = policies[i % n_policies]
        trajs.append(collect(env, p, rng))
        snaps.append(p)
    noise = EvalNoise.isotropic(log_var, 1)
    return SupportSet(trajs, snaps, noise), SurrogateConfig(noise), spec


def _check_surrogate_grad(rng) -> float:
    support, cfg, spec = _pointmass_support(rng)
    theta = init_params(spec, rng)
    fd = finite_diff_grad(lambda p: surrogate_return(support, p, cfg), theta, 1e-6)
    return _rel_err(surrogate_grad(support, theta, cfg), fd)


def _check_naive_weights(rng) -> float:
    support, cfg, spec = _pointmass_support(rng, n_traj=4)
    target = PolicyParams(init_params(spec, rng), spec)
    trajs = support.trajectories
    snaps = [support.snapshots[u] for u in support.member_index]
    var = float(cfg.noise.var[0])

    def density(p, tr):
        mu = mlp_forward(spec, p.theta, tr.states)[:, 0]
        return np.prod(np.exp(-0.5 * (tr.actions[:, 0] - mu) ** 2 / var) / np.sqrt(2 * np.pi * var))

    naive = np.array([density(target, tr) / np.mean([density(s, tr) for s in snaps]) for tr in trajs])
    return _rel_err(np.exp(log_surrogate_weights(support, target, cfg)), naive)


def _check_ess(rng) -> float:
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 30))
        ess = effective_sample_size(rng.normal(size=n) * 3)
        worst = max(worst, max(0.0, 1 - ess), max(0.0, ess - n))
    return worst


def _check_softmax(rng) -> float:
    probs = softmax_probs([0.0, 0.5, 1.0], 0.5)
    expected = np.exp([0.0, 1.0, 2.0]) / np.exp([0.0, 1.0, 2.0]).sum()
    return _rel_err(probs, expected)


CHECKS = [
    ("mlp_vjp vs finite differences", _check_vjp, 1e-6),
    ("trajectory log-lik gradient vs finite differences", _check_loglik_grad, 1e-5),
    ("self-normalised surrogate gradient vs finite differences", _check_surrogate_grad, 1e-4),
    ("log-space weights vs naive density ratios", _check_naive_weights, 1e-9),
    ("ESS within [1, N]", _check_ess, 1e-12),
    ("softmax selection probabilities", _check_softmax, 1e-12),
]


def run_selftest(seed: int = 0, verbose: bool = True) -> bool:
    rng = make_rng(seed)
    ok = True
    for name, check, tol in CHECKS:
        err = check(rng)
        passed = err <= tol
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}: error {err:.2e} (tol {tol:.0e})")
    return ok
