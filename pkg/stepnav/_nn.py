"""Minimal numpy network layers with analytic backpropagation, plus Adam.

Every layer caches what its backward pass needs during forward. Gradients are
accumulated as the gradient of the *summed* batch loss the caller differentiated,
so callers divide by the batch size themselves when the loss is a mean.

Parameters are plain arrays updated in place; `parameters()` and `gradients()`
return them in one fixed order, which Adam and checkpointing rely on.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Dense:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        limit = 1.0 / math.sqrt(n_in)
        self.W = rng.uniform(-limit, limit, (n_in, n_out))
        self.b = np.zeros(n_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W + self.b

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self.dW = self._x.T @ grad
        self.db = grad.sum(axis=0)
        return grad @ self.W.T

    def parameters(self) -> list[np.ndarray]:
        return [self.W, self.b]

    def gradients(self) -> list[np.ndarray]:
        return [self.dW, self.db]


class ReLU:
    def __init__(self):
        self._mask: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad, 0.0)

    def parameters(self) -> list[np.ndarray]:
        return []

    def gradients(self) -> list[np.ndarray]:
        return []


class Sequential:
    def __init__(self, layers: Sequence):
        self.layers = list(layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.parameters()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.gradients()]

    def load(self, values: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError(f"expected {len(params)} arrays, got {len(values)}")
        for p, v in zip(params, values):
            if p.shape != np.shape(v):
                raise ValueError(f"parameter shape {p.shape} does not match {np.shape(v)}")
            p[...] = v


class Mlp(Sequential):
    """Dense layers with ReLU between them and a linear output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        layers: list = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            layers.append(Dense(a, b, rng))
            if i < len(sizes) - 2:
                layers.append(ReLU())
        super().__init__(layers)
        self.sizes = tuple(sizes)


class Conv2d:
    """3×3 convolution, stride 1, zero padding 1. Input (B, C, H, W)."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, k: int = 3):
        limit = 1.0 / math.sqrt(c_in * k * k)
        self.k = k
        self.W = rng.uniform(-limit, limit, (c_out, c_in, k, k))
        self.b = np.zeros(c_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._windows: Optional[np.ndarray] = None
        self._shape: Optional[tuple] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        pad = self.k // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        self._windows = sliding_window_view(xp, (self.k, self.k), axis=(2, 3))
        self._shape = x.shape
        return np.einsum("bchwij,ocij->bohw", self._windows, self.W, optimize=True) + self.b[None, :, None, None]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self.dW = np.einsum("bchwij,bohw->ocij", self._windows, grad, optimize=True)
        self.db = grad.sum(axis=(0, 2, 3))
        B, C, H, W = self._shape
        pad = self.k // 2
        dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
        for i in range(self.k):
            for j in range(self.k):
                dxp[:, :, i:i + H, j:j + W] += np.einsum("bohw,oc->bchw", grad, self.W[:, :, i, j], optimize=True)
        return dxp[:, :, pad:pad + H, pad:pad + W]

    def parameters(self) -> list[np.ndarray]:
        return [self.W, self.b]

    def gradients(self) -> list[np.ndarray]:
        return [self.dW, self.db]


class MaxPool2d:
    """2×2 max-pool, stride 2. Ties route the gradient to the first maximum."""

    def __init__(self):
        self._idx: Optional[np.ndarray] = None
        self._shape: Optional[tuple] = None

    @staticmethod
    def _blocks(x: np.ndarray) -> np.ndarray:
        B, C, H, W = x.shape
        return x.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, W // 2, 4)

    def forward(self, x: np.ndarray) -> np.ndarray:
        blocks = self._blocks(x)
        self._idx = np.argmax(blocks, axis=-1)
        self._shape = x.shape
        return np.take_along_axis(blocks, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        B, C, H, W = self._shape
        blocks = np.zeros((B, C, H // 2, W // 2, 4))
        np.put_along_axis(blocks, self._idx[..., None], grad[..., None], axis=-1)
        return blocks.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)

    def parameters(self) -> list[np.ndarray]:
        return []

    def gradients(self) -> list[np.ndarray]:
        return []


class Flatten:
    def __init__(self):
        self._shape: Optional[tuple] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad.reshape(self._shape)

    def parameters(self) -> list[np.ndarray]:
        return []

    def gradients(self) -> list[np.ndarray]:
        return []


class ConvEncoder(Sequential):
    """
    Occupancy grid (B, 64, 64) → 64 features: three conv(3×3)+ReLU+pool(2×2)
    stages with 8, 16, 16 channels, then dense 1024 → 128 → 64 with ReLU between.
    """

    def __init__(self, rng: np.random.Generator, grid_size: int = 64, out_features: int = 64):
        side = grid_size // 8
        super().__init__([
            Conv2d(1, 8, rng), ReLU(), MaxPool2d(),
            Conv2d(8, 16, rng), ReLU(), MaxPool2d(),
            Conv2d(16, 16, rng), ReLU(), MaxPool2d(),
            Flatten(),
            Dense(16 * side * side, 128, rng), ReLU(),
            Dense(128, out_features, rng),
        ])

    def forward(self, grids: np.ndarray) -> np.ndarray:
        return super().forward(np.asarray(grids, dtype=float)[:, None, :, :])

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return super().backward(grad)[:, 0]


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> list[np.ndarray]:
        return [np.array([self.t], dtype=float), *self.m, *self.v]

    def load_state(self, values: Sequence[np.ndarray]) -> None:
        n = len(self.params)
        if len(values) != 1 + 2 * n:
            raise ValueError(f"optimizer state holds {len(values)} arrays, expected {1 + 2 * n}")
        self.t = int(values[0][0])
        for dst, src in zip(self.m + self.v, values[1:]):
            dst[...] = src
