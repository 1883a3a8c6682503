"""Deterministic MLP policies and the Gaussian evaluation kernel around them."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .numkit import MlpSpec, forward_and_vjp, init_params, mlp_forward

if TYPE_CHECKING:
    from .rollout import Trajectory

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class PolicyParams:
    theta: np.ndarray
    spec: MlpSpec

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).ravel()
        if theta.shape[0] != self.spec.num_params:
            raise ValueError(
                f"theta has {theta.shape[0]} entries, spec needs {self.spec.num_params}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("policy parameters must be finite")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @classmethod
    def random(cls, spec: MlpSpec, rng: np.random.Generator) -> "PolicyParams":
        return cls(init_params(spec, rng), spec)

    def with_theta(self, theta: np.ndarray) -> "PolicyParams":
        return PolicyParams(theta, self.spec)


@dataclass(frozen=True, eq=False)
class EvalNoise:
    """Diagonal Gaussian covariance, stored as per-dimension log-variances."""

    log_var: np.ndarray

    def __post_init__(self):
        lv = np.array(self.log_var, dtype=np.float64).ravel()
        if lv.size == 0 or not np.all(np.isfinite(lv)):
            raise ValueError("log_var must be a nonempty finite vector")
        lv.flags.writeable = False
        object.__setattr__(self, "log_var", lv)

    @classmethod
    def isotropic(cls, log_var: float, action_dim: int) -> "EvalNoise":
        return cls(np.full(action_dim, float(log_var)))

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)

    @property
    def key(self) -> tuple[float, ...]:
        return tuple(self.log_var.tolist())


def act(params: PolicyParams, state: np.ndarray) -> np.ndarray:
    return mlp_forward(params.spec, params.theta, state)


def _check(params: PolicyParams, noise: EvalNoise, traj: "Trajectory"):
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if traj.states.shape[1] != params.spec.input_dim:
        raise ValueError("trajectory state dimension does not match policy input")
    if traj.actions.shape[1] != params.spec.output_dim or noise.log_var.shape[0] != params.spec.output_dim:
        raise ValueError("action dimension mismatch between trajectory, policy and noise")


def step_log_densities(means: np.ndarray, actions: np.ndarray, noise: EvalNoise) -> np.ndarray:
    """Per-step Gaussian log-density of ``actions`` around ``means``."""
    resid = actions - means
    with np.errstate(over="ignore"):  # overflow means the density underflows to zero
        per_dim = LOG_2PI + noise.log_var + resid ** 2 / noise.var
    return -0.5 * per_dim.sum(axis=-1)


def traj_log_lik(params: PolicyParams, noise: EvalNoise, traj: "Trajectory") -> float:
    """Log-likelihood of the recorded actions under N(mu_theta(s), Sigma)."""
    _check(params, noise, traj)
    means = mlp_forward(params.spec, params.theta, traj.states)
    out = float(step_log_densities(means, traj.actions, noise).sum())
    if not np.isfinite(out):
        raise FloatingPointError("non-finite trajectory log-likelihood")
    return out


def traj_log_lik_grad(params: PolicyParams, noise: EvalNoise, traj: "Trajectory") -> np.ndarray:
    _check(params, noise, traj)
    means, pullback = forward_and_vjp(params.spec, params.theta, traj.states)
    cot = (traj.actions - means) / noise.var
    grad = pullback(cot)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite log-likelihood gradient")
    return grad


# -- persistence -------------------------------------------------------------
#
# Plain-text format, one token group per line:
#
#   ddopg-policy 1
#   dims <input_dim> <hidden_1> ... <hidden_k> <output_dim>
#   activation tanh
#   params <count>
#   <count lines, one float each, repr() round-trip precision>

_MAGIC = "ddopg-policy 1"


def format_params(params: PolicyParams) -> str:
    spec = params.spec
    dims = (spec.input_dim, *spec.hidden_dims, spec.output_dim)
    lines = [
        _MAGIC,
        "dims " + " ".join(str(d) for d in dims),
        f"activation {spec.activation}",
        f"params {params.theta.size}",
    ]
    lines.extend(repr(float(v)) for v in params.theta)
    return "\n".join(lines) + "\n"


def parse_params(text: str) -> PolicyParams:
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if not lines or lines[0] != _MAGIC:
        raise ValueError("not a policy parameter file")
    dims = [int(tok) for tok in lines[1].split()[1:]]
    activation = lines[2].split()[1]
    count = int(lines[3].split()[1])
    spec = MlpSpec(dims[0], dims[-1], tuple(dims[1:-1]), activation)
    values = np.array([float(v) for v in lines[4:4 + count]])
    if values.size != count:
        raise ValueError(f"expected {count} parameters, found {values.size}")
    return PolicyParams(values, spec)


def save_params(params: PolicyParams, path: str | Path) -> None:
    Path(path).write_text(format_params(params))


def load_params(path: str | Path) -> PolicyParams:
    return parse_params(Path(path).read_text())
