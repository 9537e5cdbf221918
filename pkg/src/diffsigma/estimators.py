"""Non-neural noise-level estimators.

``estimate_direct`` and ``estimate_mad`` consume a two-frame difference
image, whose variance is ``2 * sigma**2`` regardless of image content.
``estimate_patch_min`` is the single-image baseline: it only sees one
noisy frame and therefore mixes texture into its estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imageio import Image
from .noise import DifferenceImage

SQRT2 = math.sqrt(2.0)
MAD_CONSISTENCY = 0.6745

METHODS = ("direct", "mad", "patch_min")


@dataclass(frozen=True)
class EstimatorResult:
    sigma_hat: float
    per_channel: list[float] = field(default_factory=list)
    method: str = "direct"

    @classmethod
    def from_channels(cls, per_channel, method: str) -> "EstimatorResult":
        per_channel = [float(v) for v in per_channel]
        if any(v < 0 for v in per_channel):
            raise ValueError("per-channel estimates must be non-negative")
        return cls(float(np.mean(per_channel)), per_channel, method)

    def to_dict(self) -> dict:
        return {"method": self.method, "sigma_hat": self.sigma_hat, "per_channel": self.per_channel}


def _channels(diff: DifferenceImage) -> np.ndarray:
    x = diff.data.reshape(-1, diff.channels)
    if x.shape[0] < 2:
        raise ValueError("need at least 2 pixels per channel")
    return x


def estimate_direct(diff: DifferenceImage) -> EstimatorResult:
    """Unbiased sample std of each channel, divided by sqrt(2)."""
    x = _channels(diff)
    return EstimatorResult.from_channels(x.std(axis=0, ddof=1) / SQRT2, "direct")


def estimate_mad(diff: DifferenceImage) -> EstimatorResult:
    x = _channels(diff)
    med = np.median(x, axis=0)
    mad = np.median(np.abs(x - med), axis=0)
    return EstimatorResult.from_channels(mad / MAD_CONSISTENCY / SQRT2, "mad")


def estimate_patch_min(noisy: Image, p: int = 16) -> EstimatorResult:
    """Smallest sample std over non-overlapping ``p x p`` tiles, per channel.

    Partial tiles at the right and bottom edges are dropped.
    """
    if p < 2:
        raise ValueError("tile size must be at least 2")
    if p > min(noisy.height, noisy.width):
        raise ValueError(f"tile size {p} exceeds image size {noisy.height}x{noisy.width}")
    th, tw = noisy.height // p, noisy.width // p
    tiles = noisy.data[: th * p, : tw * p].reshape(th, p, tw, p, noisy.channels)
    tiles = tiles.transpose(0, 2, 4, 1, 3).reshape(th * tw, noisy.channels, p * p)
    stds = tiles.std(axis=2, ddof=1)
    return EstimatorResult.from_channels(stds.min(axis=0), "patch_min")
