"""Adam ascent and the inner loop that maximises the penalised surrogate."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .estimators import SupportSet, SurrogateConfig, penalized_objective
from .policy import PolicyParams


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, size: int, **hyper) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, **hyper)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam step in the ascent direction."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.m.shape or np.shape(params) != grad.shape:
        raise ValueError("gradient, parameters and moments must have equal length")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = np.asarray(params, dtype=np.float64) + state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step=t), new


@dataclass(frozen=True)
class InnerLoopConfig:
    max_iters: int = 200
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_tol: float = 1e-6
    improve_tol: float = 1e-8
    patience: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if min(self.grad_tol, self.improve_tol) < 0:
            raise ValueError("tolerances must be nonnegative")


@dataclass
class InnerLoopResult:
    params: PolicyParams
    objective: float
    start_objective: float
    iterations: int
    history: list[float]


def optimize_lower_bound(start: PolicyParams, support: SupportSet, cfg: SurrogateConfig,
                         loop: InnerLoopConfig = InnerLoopConfig()) -> InnerLoopResult:
    """Maximise surrogate + penalty with Adam, returning the best iterate seen.

    Stops after ``loop.max_iters`` updates, when the gradient's max-norm drops
    below ``grad_tol``, or when the best objective improved by less than
    ``improve_tol`` over the last ``patience`` evaluations.
    """
    theta = np.array(start.theta)
    state = AdamState.fresh(theta.size, lr=loop.lr, beta1=loop.beta1, beta2=loop.beta2, eps=loop.eps)
    ev = penalized_objective(support, theta, cfg)
    best_theta, best_val = theta, ev.value
    start_val = ev.value
    history = [ev.value]
    best_trace = [best_val]
    iters = 0
    for _ in range(loop.max_iters):
        if not np.isfinite(ev.value) or np.max(np.abs(ev.grad)) < loop.grad_tol:
            break
        state, theta = adam_step(state, theta, ev.grad)
        iters += 1
        if iters == loop.max_iters:
            ev = penalized_objective(support, theta, cfg, with_grad=False)
        else:
            ev = penalized_objective(support, theta, cfg)
        history.append(ev.value)
        if np.isfinite(ev.value) and ev.value > best_val:
            best_theta, best_val = theta, ev.value
        best_trace.append(best_val)
        if len(best_trace) > loop.patience and best_val - best_trace[-1 - loop.patience] < loop.improve_tol:
            break
    return InnerLoopResult(start.with_theta(best_theta), best_val, start_val, iters, history)
