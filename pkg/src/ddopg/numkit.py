"""Small numerical toolkit: a flat-parameter tanh MLP, log-sum-exp, finite
differences and seeded random streams.

Parameter packing
-----------------
The flat vector stores the layers in order. For every layer the weight
matrix of shape ``(fan_in, fan_out)`` comes first in row-major order,
followed by the ``fan_out`` biases. A layer maps ``x -> x @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden_dims: tuple[int, ...] = (32, 32)
    activation: str = "tanh"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) <= 0 for d in dims):
            raise ValueError(f"layer widths must be positive, got {dims}")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def num_params(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.layer_dims)

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` into the flat parameter vector, one per layer."""
        params = np.asarray(params, dtype=np.float64)
        if params.ndim != 1 or params.shape[0] != self.num_params:
            raise ValueError(
                f"expected {self.num_params} parameters, got shape {params.shape}"
            )
        layers = []
        offset = 0
        for fan_in, fan_out in self.layer_dims:
            w = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = params[offset:offset + fan_out]
            offset += fan_out
            layers.append((w, b))
        return layers


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream)``.

    Streams are spawned children of the same seed sequence, so workers that
    own different streams never share draws.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream),))))


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    chunks = []
    for fan_in, fan_out in spec.layer_dims:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"{what} must have trailing dimension {dim}, got shape {x.shape}")
    return x, single


def _forward_cache(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    layers = spec.unpack(params)
    acts = [x]
    h = x
    for k, (w, b) in enumerate(layers):
        z = h @ w + b
        h = z if k == len(layers) - 1 else np.tanh(z)
        acts.append(h)
    return layers, acts


def mlp_forward(spec: MlpSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of row vectors."""
    x, single = _as_batch(inputs, spec.input_dim, "input")
    _, acts = _forward_cache(spec, params, x)
    out = acts[-1]
    return out[0] if single else out


def mlp_vjp(spec: MlpSpec, params: np.ndarray, inputs: np.ndarray,
            cotangent: np.ndarray) -> np.ndarray:
    """Parameter gradient of ``<cotangent, mlp_forward(params, inputs)>``.

    For a batch of inputs the cotangent has one row per input and the result
    is summed over the batch.
    """
    x, single = _as_batch(inputs, spec.input_dim, "input")
    v, single_v = _as_batch(cotangent, spec.output_dim, "cotangent")
    if single != single_v or v.shape[0] != x.shape[0]:
        raise ValueError("cotangent batch does not match input batch")
    layers, acts = _forward_cache(spec, params, x)
    grads = []
    delta = v
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        grads.append((acts[k].T @ delta, delta.sum(axis=0)))
        if k > 0:
            delta = (delta @ w.T) * (1.0 - acts[k] ** 2)
    flat = []
    for gw, gb in reversed(grads):
        flat.append(gw.ravel())
        flat.append(gb)
    return np.concatenate(flat)


def forward_and_vjp(spec: MlpSpec, params: np.ndarray, inputs: np.ndarray):
    """Batched forward pass that also returns a pullback closure.

    Saves a second forward pass when the cotangent depends on the output.
    """
    x, _ = _as_batch(inputs, spec.input_dim, "input")
    layers, acts = _forward_cache(spec, params, x)

    def pullback(cotangent: np.ndarray) -> np.ndarray:
        delta = np.asarray(cotangent, dtype=np.float64).reshape(x.shape[0], spec.output_dim)
        flat = []
        for k in range(len(layers) - 1, -1, -1):
            w, _ = layers[k]
            flat.append(delta.sum(axis=0))
            flat.append((acts[k].T @ delta).ravel())
            if k > 0:
                delta = (delta @ w.T) * (1.0 - acts[k] ** 2)
        return np.concatenate(flat[::-1])

    return acts[-1], pullback


class MlpBatch:
    """Forward/backward passes over a fixed batch of inputs with reused buffers.

    Repeated evaluation on the same inputs (the inner optimisation loop)
    would otherwise allocate and page-fault fresh activation arrays on every
    call. Results returned by :meth:`forward` alias internal buffers and are
    overwritten by the next call.
    """

    def __init__(self, spec: MlpSpec, inputs: np.ndarray):
        x, _ = _as_batch(inputs, spec.input_dim, "input")
        self.spec = spec
        self.x = np.ascontiguousarray(x)
        n = self.x.shape[0]
        self.acts = [self.x] + [np.empty((n, fan_out)) for _, fan_out in spec.layer_dims]
        self.deltas = [np.empty((n, fan_out)) for _, fan_out in spec.layer_dims]
        self.grad = np.empty(spec.num_params)
        self._grad_views = spec.unpack(self.grad)
        self._ones = np.ones(n)
        self._gate = [np.empty((n, fan_out)) for _, fan_out in spec.layer_dims]
        self._layers = None

    def forward(self, params: np.ndarray) -> np.ndarray:
        self._layers = self.spec.unpack(params)
        last = len(self._layers) - 1
        for k, (w, b) in enumerate(self._layers):
            z = self.acts[k + 1]
            np.matmul(self.acts[k], w, out=z)
            np.add(z, b, out=z)
            if k < last:
                np.tanh(z, out=z)
        return self.acts[-1]

    def vjp(self, cotangent: np.ndarray) -> np.ndarray:
        """Gradient for the parameters of the most recent :meth:`forward`."""
        if self._layers is None:
            raise RuntimeError("forward() must run before vjp()")
        layers = self._layers
        delta = self.deltas[-1]
        np.copyto(delta, np.asarray(cotangent).reshape(delta.shape))
        for k in range(len(layers) - 1, -1, -1):
            gw, gb = self._grad_views[k]
            np.matmul(self.acts[k].T, delta, out=gw)
            np.matmul(self._ones, delta, out=gb)
            if k > 0:
                prev = self.deltas[k - 1]
                w = layers[k][0]
                if w.shape[1] == 1:
                    np.multiply(delta, w.T, out=prev)
                else:
                    np.matmul(delta, w.T, out=prev)
                gate = self._gate[k - 1]
                np.multiply(self.acts[k], self.acts[k], out=gate)
                np.subtract(1.0, gate, out=gate)
                np.multiply(prev, gate, out=prev)
                delta = prev
        return self.grad.copy()


def log_sum_exp(values: Sequence[float] | np.ndarray, axis: int | None = None):
    """Max-shifted ``log(sum(exp(values)))``; all ``-inf`` input gives ``-inf``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty input")
    m = np.max(v, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - m_safe), axis=axis, keepdims=True)) + m_safe
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        fp = f(x + e)
        fm = f(x - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        grad.flat[i] = (fp - fm) / (2.0 * h)
    return grad
