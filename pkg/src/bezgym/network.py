"""ReLU multilayer perceptrons with hand-written reverse-mode gradients.

Weights are stored ``(fan_in, fan_out)`` so a batch ``x`` of shape ``(B, in)``
maps through ``x @ W + b``.  The actor carries a state-independent log-std
vector next to its mean head; the critic is a separate network with one
linear output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from bezgym.errors import ShapeMismatch, StaleCache

DEFAULT_HIDDEN = (400, 200, 100)
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    log_std: np.ndarray | None = None

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(w.shape[1] for w in self.weights)

    def arrays(self) -> list[np.ndarray]:
        """Every trainable array in a fixed order (weights, biases, then log-std)."""
        out = [a for pair in zip(self.weights, self.biases) for a in pair]
        if self.log_std is not None:
            out.append(self.log_std)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         None if self.log_std is None else self.log_std.copy())

    def astype(self, dtype) -> "MlpParams":
        return MlpParams([w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases],
                         None if self.log_std is None else self.log_std.astype(dtype))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec) -> "MlpParams":
        out, i = self.copy(), 0
        for a in out.arrays():
            a[...] = vec[i:i + a.size].reshape(a.shape)
            i += a.size
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list[np.ndarray] = field(default_factory=list)
    activations: list[np.ndarray] = field(default_factory=list)
    sizes: tuple[int, ...] = ()


@dataclass
class PolicyOutput:
    mean: np.ndarray
    log_std: np.ndarray
    value: np.ndarray | None = None


def mlp_init(input_dim: int, output_dim: int, rng: np.random.Generator,
             hidden=DEFAULT_HIDDEN, with_log_std: bool = False, dtype=np.float64,
             output_scale: float = 1.0) -> MlpParams:
    """Uniform(+-sqrt(6 / fan_in)) weights, zero biases, zero log-std.

    ``output_scale`` shrinks the last layer (a small policy head starts every
    action near its offset).
    """
    if input_dim <= 0 or output_dim <= 0 or any(h <= 0 for h in hidden):
        raise ValueError("layer sizes must be positive")
    sizes = (input_dim,) + tuple(hidden) + (output_dim,)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    weights[-1] *= output_scale
    log_std = np.zeros(output_dim, dtype=dtype) if with_log_std else None
    return MlpParams(weights, biases, log_std)


def forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    """Linear output of the network and the cache needed by :func:`backward`."""
    x = np.asarray(x, dtype=params.weights[0].dtype)
    if x.shape[-1] != params.input_dim:
        raise ShapeMismatch(f"expected input width {params.input_dim}, got {x.shape[-1]}")
    single = x.ndim == 1
    h = x[None] if single else x
    cache = ForwardCache(inputs=h, sizes=params.sizes)
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w + b
        if k == last:
            h = a
        else:
            cache.pre_activations.append(a)
            h = np.maximum(a, 0.0)
            cache.activations.append(h)
    return (h[0] if single else h), cache


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    log_std: np.ndarray | None = None
    inputs: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        out = [a for pair in zip(self.weights, self.biases) for a in pair]
        if self.log_std is not None:
            out.append(self.log_std)
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


def backward(params: MlpParams, cache: ForwardCache, grad_out) -> MlpGrads:
    """Gradients of a scalar loss given ``dloss/doutput`` for every batch row.

    ``grads.log_std`` is left as zeros; the Gaussian head fills it in.
    """
    if cache.sizes != params.sizes:
        raise StaleCache("cache was produced by a network of different shape")
    g = np.asarray(grad_out, dtype=params.weights[0].dtype)
    if g.ndim == 1:
        g = g[None]
    n_rows = cache.inputs.shape[0]
    if g.shape != (n_rows, params.output_dim):
        raise StaleCache(f"output gradient shape {g.shape} does not match cached batch "
                         f"({n_rows}, {params.output_dim})")
    L = len(params.weights)
    gw, gb = [None] * L, [None] * L
    for k in range(L - 1, -1, -1):
        h_in = cache.inputs if k == 0 else cache.activations[k - 1]
        gw[k] = h_in.T @ g
        gb[k] = g.sum(axis=0)
        g = g @ params.weights[k].T
        if k > 0:
            g = g * (cache.pre_activations[k - 1] > 0)
    log_std = None if params.log_std is None else np.zeros_like(params.log_std)
    return MlpGrads(gw, gb, log_std, inputs=g)


def zero_grads(params: MlpParams) -> MlpGrads:
    return MlpGrads([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases],
                    None if params.log_std is None else np.zeros_like(params.log_std))


def clamped_log_std(params: MlpParams) -> np.ndarray:
    return np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX)


def policy_forward(actor: MlpParams, obs, critic: MlpParams | None = None):
    """Gaussian policy head (and optionally the critic's value) for ``obs``."""
    mean, cache = forward(actor, obs)
    value = None
    if critic is not None:
        v, _ = forward(critic, obs)
        value = v[..., 0]
    return PolicyOutput(mean=mean, log_std=clamped_log_std(actor), value=value), cache


def gaussian_log_prob(action, mean, log_std):
    z = (np.asarray(action) - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)


def gaussian_entropy(log_std):
    return np.sum(log_std + 0.5 + HALF_LOG_2PI, axis=-1)


def gaussian_logprob_sample(policy: PolicyOutput, rng: np.random.Generator, deterministic: bool = False):
    """Sample raw actions from the diagonal Gaussian; returns (action, log_prob, entropy)."""
    mean = np.asarray(policy.mean)
    log_std = np.broadcast_to(policy.log_std, mean.shape)
    if deterministic:
        action = mean.copy()
    else:
        action = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return action, gaussian_log_prob(action, mean, log_std), gaussian_entropy(log_std)


def input_gradient_penalty(params: MlpParams, cache: ForwardCache, coef: float = 1.0):
    """Penalty ``coef * mean_rows ||d out / d x||^2`` of a scalar-output network and
    its exact parameter gradient.

    With ReLU the input gradient is ``W1 M1 W2 M2 ... WL``, where the masks
    ``Mk`` are locally constant; the penalty is therefore differentiated by a
    second pass through that linear chain.  Biases receive no gradient.
    """
    if params.output_dim != 1:
        raise ShapeMismatch("gradient penalty needs a single-output network")
    if cache.sizes != params.sizes:
        raise StaleCache("cache was produced by a network of different shape")
    n = cache.inputs.shape[0]
    L = len(params.weights)
    masks = [(a > 0).astype(params.weights[0].dtype) for a in cache.pre_activations]
    # input gradient chain: c_L = 1, d_k = m_k * c_k (d_L = c_L), c_{k-1} = d_k @ W_k^T
    d = [None] * L
    c = np.ones((n, 1), dtype=params.weights[0].dtype)
    for k in range(L - 1, -1, -1):
        d[k] = c if k == L - 1 else c * masks[k]
        c = d[k] @ params.weights[k].T
    grad_x = c
    penalty = coef * float(np.mean(np.sum(grad_x * grad_x, axis=1)))
    # reverse pass through the chain
    r = 2.0 * coef * grad_x / n
    gw = [None] * L
    for k in range(L):
        gw[k] = r.T @ d[k]
        if k < L - 1:
            r = (r @ params.weights[k]) * masks[k]
    gb = [np.zeros_like(b) for b in params.biases]
    return penalty, MlpGrads(gw, gb, None), grad_x


def add_grads(a: MlpGrads, b: MlpGrads, scale: float = 1.0) -> MlpGrads:
    ls = a.log_std
    if a.log_std is not None and b.log_std is not None:
        ls = a.log_std + scale * b.log_std
    return MlpGrads([x + scale * y for x, y in zip(a.weights, b.weights)],
                    [x + scale * y for x, y in zip(a.biases, b.biases)], ls)
