"""Shared fixture builders for the test modules."""
import numpy as np

from ddopg.envs import PointMass
from ddopg.estimators import SupportSet, SurrogateConfig
from ddopg.numkit import MlpSpec, init_params
from ddopg.policy import EvalNoise, PolicyParams
from ddopg.rollout import collect


def pointmass_support(rng, n_traj=8, n_policies=3, horizon=10, log_var=-1.0, hidden=(6,),
                      scale=2.0, init_noise=0.2, gamma=1.0, normalization="self", penalty=0.05):
    """``n_traj`` point-mass rollouts from ``n_policies`` random policies, round robin."""
    env = PointMass(horizon, init_noise=init_noise)
    spec = MlpSpec(2, 1, hidden)
    policies = [PolicyParams(scale * init_params(spec, rng), spec) for _ in range(n_policies)]
    trajs, snaps = [], []
    for i in range(n_traj):
        p = policies[i % n_policies]
        trajs.append(collect(env, p, rng, gamma))
        snaps.append(p)
    noise = EvalNoise.isotropic(log_var, 1)
    cfg = SurrogateConfig(noise, normalization, penalty, env.max_return())
    return SupportSet(trajs, snaps, noise), cfg, spec, policies


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))
