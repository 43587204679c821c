"""Trainable parameters, dense layers, and inverted dropout masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import get_activation


class Parameter:
    """A named trainable array with an accumulated gradient.

    ``penalized`` marks whether the array enters the L2 weight penalty;
    biases are exempt.
    """

    __slots__ = ("name", "value", "grad", "penalized")

    def __init__(self, name: str, value: np.ndarray, penalized: bool = True):
        self.name = name
        self.value = np.array(value, dtype=float)
        self.grad = np.zeros_like(self.value)
        self.penalized = penalized

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class DenseLayer:
    """Fully connected layer ``y = act(x @ W + b)`` with cached backward."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "sigmoid",
                 rng: np.random.Generator | None = None, name: str = "dense"):
        if in_dim < 1 or out_dim < 1:
            raise ValueError(f"bad dimensions in_dim={in_dim} out_dim={out_dim}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self._act, self._act_deriv = get_activation(activation)
        self.W = Parameter(f"{name}.W", glorot_uniform(rng, in_dim, out_dim, (in_dim, out_dim)))
        self.b = Parameter(f"{name}.b", np.zeros(out_dim), penalized=False)
        self._x = None
        self._a = None

    def parameters(self) -> list[Parameter]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        x2 = x[None, :] if squeeze else x
        if x2.ndim != 2 or x2.shape[1] != self.in_dim:
            raise ValueError(
                f"dense layer expects (*, {self.in_dim}) input, got shape {x.shape}"
            )
        a = self._act(x2 @ self.W.value + self.b.value)
        if cache:
            self._x, self._a = x2, a
        return a[0] if squeeze else a

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; return gradient w.r.t. the input."""
        if self._a is None:
            raise RuntimeError("forward(cache=True) must run before backward")
        grad_out = np.asarray(grad_out, dtype=float)
        squeeze = grad_out.ndim == 1
        g2 = grad_out[None, :] if squeeze else grad_out
        dz = g2 * self._act_deriv(self._a)
        self.W.grad += self._x.T @ dz
        self.b.grad += dz.sum(axis=0)
        dx = dz @ self.W.value.T
        return dx[0] if squeeze else dx


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """Stateless forward pass through a dense layer."""
    return layer.forward(x, cache=False)


@dataclass(frozen=True)
class DropoutMask:
    """Inverted dropout mask: entries are 0 (dropped) or 1/(1-p) (kept).

    Multiplying by the mask keeps activations unbiased in expectation; at
    p = 0 the mask is exactly the identity.  ``stream`` records which RNG
    stream drew the mask.
    """

    values: np.ndarray
    p: float
    stream: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x * self.values


def sample_dropout_mask(shape, p: float, rng: np.random.Generator,
                        stream: str = "") -> DropoutMask:
    """Draw an inverted dropout mask of the given shape."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        values = np.ones(shape)
    else:
        keep = rng.random(size=shape) >= p
        values = keep / (1.0 - p)
    return DropoutMask(values=values, p=p, stream=stream)
