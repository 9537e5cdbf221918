"""Stateful layers built on the functional kernels.

A layer caches what its backward pass needs during ``forward`` and writes
parameter gradients into its :class:`LayerParams` during ``backward``.
Parameters are never touched by ``forward``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..rng import derive_seed, normals
from . import functional as F


@dataclass
class LayerParams:
    """Weights, bias, their gradients and Adam moment accumulators."""

    weights: np.ndarray
    bias: np.ndarray
    grad_weights: np.ndarray = field(default=None)
    grad_bias: np.ndarray = field(default=None)
    m_weights: np.ndarray = field(default=None)
    v_weights: np.ndarray = field(default=None)
    m_bias: np.ndarray = field(default=None)
    v_bias: np.ndarray = field(default=None)
    step_count: int = 0

    def __post_init__(self):
        for name, like in (("grad_weights", self.weights), ("grad_bias", self.bias),
                           ("m_weights", self.weights), ("v_weights", self.weights),
                           ("m_bias", self.bias), ("v_bias", self.bias)):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros_like(like))

    def zero_grad(self) -> None:
        self.grad_weights[...] = 0
        self.grad_bias[...] = 0

    def astype(self, dtype) -> "LayerParams":
        return LayerParams(self.weights.astype(dtype), self.bias.astype(dtype))


def kaiming(shape: tuple[int, ...], fan_in: int, seed: int, dtype=np.float32) -> np.ndarray:
    """Normal(0, 2 / fan_in) weights from the deterministic stream of ``seed``."""
    n = int(np.prod(shape))
    return (normals(seed, n) * math.sqrt(2.0 / fan_in)).reshape(shape).astype(dtype)


class Layer:
    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def params(self, prefix: str = ""):
        return []

    def __call__(self, x):
        return self.forward(x)


class Conv2d(Layer):
    def __init__(self, params: LayerParams, stride: int = 1, pad: int = 0):
        self.p = params
        self.stride = stride
        self.pad = pad
        self._cache = None

    @classmethod
    def init(cls, c_in, c_out, k, seed, stride=1, pad=0, dtype=np.float32):
        w = kaiming((c_out, c_in, k, k), c_in * k * k, seed, dtype)
        return cls(LayerParams(w, np.zeros(c_out, dtype=dtype)), stride, pad)

    def forward(self, x):
        out, self._cache = F.conv2d_forward(x, self.p.weights, self.p.bias, self.stride, self.pad)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv2d_backward(dout, self._cache)
        self.p.grad_weights += dw
        self.p.grad_bias += db
        return dx

    def params(self, prefix=""):
        return [(prefix, self.p)]


class Linear(Layer):
    def __init__(self, params: LayerParams):
        self.p = params
        self._cache = None

    @classmethod
    def init(cls, f_in, f_out, seed, dtype=np.float32):
        w = kaiming((f_in, f_out), f_in, seed, dtype)
        return cls(LayerParams(w, np.zeros(f_out, dtype=dtype)))

    def forward(self, x):
        out, self._cache = F.fully_connected_forward(x, self.p.weights, self.p.bias)
        return out

    def backward(self, dout):
        dx, dw, db = F.fully_connected_backward(dout, self._cache)
        self.p.grad_weights += dw
        self.p.grad_bias += db
        return dx

    def params(self, prefix=""):
        return [(prefix, self.p)]


class ReLU(Layer):
    def forward(self, x):
        out, self._x = F.relu_forward(x)
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._x)


class MaxPool2d(Layer):
    def __init__(self, k: int, stride: int | None = None):
        self.k = k
        self.stride = k if stride is None else stride

    def forward(self, x):
        out, self._cache = F.maxpool_forward(x, self.k, self.stride)
        return out

    def backward(self, dout):
        return F.maxpool_backward(dout, self._cache)


class GlobalAvgPool(Layer):
    def forward(self, x):
        out, self._shape = F.global_avg_pool_forward(x)
        return out

    def backward(self, dout):
        return F.global_avg_pool_backward(dout, self._shape)


class Fire(Layer):
    """Squeeze 1x1 + ReLU, then parallel expand 1x1 and 3x3 (pad 1) + ReLU, concatenated."""

    def __init__(self, squeeze: Conv2d, expand1: Conv2d, expand3: Conv2d):
        self.squeeze = squeeze
        self.expand1 = expand1
        self.expand3 = expand3
        self.relu_s, self.relu_1, self.relu_3 = ReLU(), ReLU(), ReLU()

    @classmethod
    def init(cls, c_in, s1x1, e1x1, e3x3, seed, dtype=np.float32):
        return cls(
            Conv2d.init(c_in, s1x1, 1, derive_seed(seed, 1), dtype=dtype),
            Conv2d.init(s1x1, e1x1, 1, derive_seed(seed, 2), dtype=dtype),
            Conv2d.init(s1x1, e3x3, 3, derive_seed(seed, 3), pad=1, dtype=dtype),
        )

    @property
    def out_channels(self) -> int:
        return self.expand1.p.weights.shape[0] + self.expand3.p.weights.shape[0]

    def forward(self, x):
        s = self.relu_s(self.squeeze(x))
        a = self.relu_1(self.expand1(s))
        b = self.relu_3(self.expand3(s))
        out, self._ca = F.concat_forward(a, b)
        return out

    def backward(self, dout):
        da, db = F.concat_backward(dout, self._ca)
        ds = self.expand1.backward(self.relu_1.backward(da))
        ds = ds + self.expand3.backward(self.relu_3.backward(db))
        return self.squeeze.backward(self.relu_s.backward(ds))

    def params(self, prefix=""):
        return [
            (f"{prefix}.squeeze1x1", self.squeeze.p),
            (f"{prefix}.expand1x1", self.expand1.p),
            (f"{prefix}.expand3x3", self.expand3.p),
        ]


class Sequential(Layer):
    def __init__(self, layers: list[tuple[str, Layer]]):
        self.layers = layers

    def forward(self, x):
        for _, layer in self.layers:
            x = layer(x)
        return x

    def backward(self, dout):
        for _, layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def params(self, prefix=""):
        out = []
        for name, layer in self.layers:
            out.extend(layer.params(f"{prefix}{name}"))
        return out

    def zero_grad(self) -> None:
        for _, p in self.params():
            p.zero_grad()
