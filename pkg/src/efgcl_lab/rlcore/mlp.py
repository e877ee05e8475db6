"""Dense tanh networks with hand-written backpropagation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Raised when array shapes or settings are inconsistent."""


@dataclass
class MlpParams:
    """Weights are stored as (fan_in, fan_out) so a batch multiplies on the right."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigurationError("need one bias per weight matrix")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigurationError(f"layer {k}: weight {w.shape} / bias {b.shape}")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ConfigurationError(f"layer {k} is not chain-compatible with layer {k - 1}")
        if self.activation != "tanh":
            raise ConfigurationError(f"unsupported activation {self.activation!r}")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for a in self.arrays():
            a[...] = vec[i:i + a.size].reshape(a.shape)
            i += a.size

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_mlp(sizes, rng: np.random.Generator, out_gain: float = 1.0) -> MlpParams:
    """Orthogonal-ish init: scaled Gaussian hidden layers, small output layer."""
    weights, biases = [], []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if k == len(sizes) - 2 else 1.0
        weights.append(rng.standard_normal((n_in, n_out)) * gain / np.sqrt(n_in))
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases)


@dataclass
class MlpCache:
    inputs: list[np.ndarray] = field(default_factory=list)
    hidden: list[np.ndarray] = field(default_factory=list)


def mlp_forward(params: MlpParams, x: np.ndarray, cache: MlpCache | None = None) -> np.ndarray:
    """Evaluate the network on a vector or on a (batch, features) array.

    Hidden layers use tanh, the last layer is linear. When ``cache`` is given the
    layer inputs and activations are recorded for :func:`mlp_backward`.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[-1] != params.weights[0].shape[0]:
        raise ConfigurationError(f"input has {h.shape[-1]} features, network expects {params.weights[0].shape[0]}")
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        if cache is not None:
            cache.inputs.append(h)
        h = h @ w + b
        if k < last:
            h = np.tanh(h)
            if cache is not None:
                cache.hidden.append(h)
    return h[0] if squeeze else h


def mlp_backward(params: MlpParams, cache: MlpCache, grad_out: np.ndarray):
    """Backpropagate ``grad_out`` (d loss / d output, batch-major).

    Returns ``(weight_grads, bias_grads, grad_input)``.
    """
    g = np.atleast_2d(grad_out)
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for k in range(n - 1, -1, -1):
        if k < n - 1:
            h = cache.hidden[k]
            d = h * h
            np.subtract(1.0, d, out=d)
            d *= g
            g = d
        gw[k] = cache.inputs[k].T @ g
        gb[k] = g.sum(axis=0)
        g = g @ params.weights[k].T
    return gw, gb, g
