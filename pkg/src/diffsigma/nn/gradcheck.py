"""Finite-difference verification of the analytic backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import derive_seed, normals
from .layers import Layer


@dataclass
class GradCheckReport:
    name: str
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, e in self.errors.items() if e > self.tolerance]

    def to_dict(self) -> dict:
        return {"name": self.name, "tolerance": self.tolerance, "passed": self.passed,
                "max_error": self.max_error, "errors": self.errors}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max(max|a|, max|n|, 1e-8)`` over one tensor."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def _numeric(f, arr: np.ndarray, h: float, coords) -> np.ndarray:
    grad = np.zeros(len(coords))
    flat = arr.reshape(-1)
    for i, c in enumerate(coords):
        old = flat[c]
        flat[c] = old + h
        fp = f()
        flat[c] = old - h
        fm = f()
        flat[c] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def gradient_check(layer: Layer, x: np.ndarray, tolerance: float = 1e-4, h: float = 1e-5,
                   seed: int = 0, max_coords: int | None = None, name: str = "") -> GradCheckReport:
    """Compare backprop against central differences of ``sum(r * layer(x))``.

    ``r`` is a fixed random projection. Inputs and parameters must be
    float64. With ``max_coords`` only that many coordinates per tensor are
    probed (chosen deterministically from ``seed``).
    """
    if x.dtype != np.float64:
        raise TypeError("gradient checks require float64 inputs")
    x = x.copy()
    out = layer.forward(x)
    r = normals(derive_seed(seed, 99), out.size).reshape(out.shape)

    def loss() -> float:
        return float(np.sum(layer.forward(x) * r))

    params = layer.params()
    for _, p in params:
        p.zero_grad()
    layer.forward(x)
    dx = layer.backward(r)
    tensors = [("input", x, dx)]
    for pname, p in params:
        tensors.append((f"{pname}.weights", p.weights, p.grad_weights.copy()))
        tensors.append((f"{pname}.bias", p.bias, p.grad_bias.copy()))

    report = GradCheckReport(name or type(layer).__name__, tolerance)
    for i, (tname, arr, analytic) in enumerate(tensors):
        n = arr.size
        if max_coords is not None and n > max_coords:
            pick = np.random.default_rng(derive_seed(seed, i)).choice(n, max_coords, replace=False)
            coords = np.sort(pick)
        else:
            coords = np.arange(n)
        numeric = _numeric(loss, arr, h, coords)
        report.errors[tname] = relative_error(analytic.reshape(-1)[coords], numeric)
    return report


def _layer_cases(seed: int):
    from .layers import Conv2d, Fire, GlobalAvgPool, Linear, MaxPool2d, ReLU, Sequential

    d = np.float64

    def x(*shape, k=0):
        return normals(derive_seed(seed, 1000 + k), int(np.prod(shape))).reshape(shape)

    yield "conv2d 3x3 s1 p1", Conv2d.init(3, 4, 3, derive_seed(seed, 1), 1, 1, d), x(2, 3, 6, 6, k=1)
    yield "conv2d 3x3 s2 p0", Conv2d.init(2, 3, 3, derive_seed(seed, 2), 2, 0, d), x(2, 2, 7, 7, k=2)
    yield "conv2d 1x1 s1", Conv2d.init(3, 2, 1, derive_seed(seed, 3), 1, 0, d), x(2, 3, 4, 4, k=3)
    yield "conv2d 1x1 s2", Conv2d.init(3, 2, 1, derive_seed(seed, 4), 2, 0, d), x(1, 3, 5, 5, k=4)
    yield "relu", ReLU(), x(2, 3, 4, 4, k=5)
    yield "maxpool 2/2", MaxPool2d(2, 2), x(2, 2, 6, 6, k=6)
    yield "maxpool 3/2", MaxPool2d(3, 2), x(1, 2, 7, 7, k=7)
    yield "global_avg_pool", GlobalAvgPool(), x(2, 3, 4, 5, k=8)
    yield "fully_connected", Linear.init(6, 3, derive_seed(seed, 9), d), x(4, 6, k=9)
    yield "fire", Fire.init(4, 2, 3, 3, derive_seed(seed, 10), d), x(2, 4, 5, 5, k=10)
    net = Sequential([
        ("conv1", Conv2d.init(1, 6, 3, derive_seed(seed, 20), 2, 1, d)),
        ("relu1", ReLU()),
        ("pool1", MaxPool2d(2, 2)),
        ("fire2", Fire.init(6, 2, 4, 4, derive_seed(seed, 21), d)),
        ("fire3", Fire.init(8, 3, 4, 4, derive_seed(seed, 22), d)),
        ("conv10", Conv2d.init(8, 5, 1, derive_seed(seed, 23), dtype=d)),
        ("relu10", ReLU()),
        ("gap", GlobalAvgPool()),
        ("fc", Linear.init(5, 2, derive_seed(seed, 24), d)),
    ])
    yield "two-fire network", net, x(2, 1, 12, 12, k=11)


def run_suite(tolerance: float = 1e-4, seed: int = 0) -> list[GradCheckReport]:
    """Check every layer type and a small two-fire network in float64.

    Biases are randomised first: zero biases behind dead ReLUs put
    pre-activations exactly on the kink, where the derivative is undefined.
    """
    reports = []
    for i, (name, layer, inp) in enumerate(_layer_cases(seed)):
        for j, (_, p) in enumerate(layer.params()):
            p.bias[...] = 0.1 * normals(derive_seed(seed, 2000 + i, j), p.bias.size)
        reports.append(gradient_check(layer, inp, tolerance, seed=seed, name=name))
    return reports
