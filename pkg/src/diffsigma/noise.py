"""AWGN synthesis, frame pairs, difference images and patch sampling.

Noise for pixel ``(y, x, c)`` of an ``H x W x C`` image is normal number
``(y * W + x) * C + c`` of the frame's seed stream, so a crop can be
synthesised on its own and still agree exactly with the full frame.

Scaled noise is snapped to the 2**-32 grid of :func:`imageio.snap`; for
images on that grid (anything decoded from 8-bit files) unclipped frame
differences are exactly independent of the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imageio import Image, snap
from .rng import ALGORITHM_ID, Prng, derive_seed, normals_at


def _check_sigma(sigma: float) -> None:
    if not sigma >= 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")


def _pixel_indices(shape: tuple[int, int, int], y: int = 0, x: int = 0,
                   h: int | None = None, w: int | None = None) -> np.ndarray:
    H, W, C = shape
    h = H if h is None else h
    w = W if w is None else w
    rows = np.arange(y, y + h, dtype=np.int64)[:, None, None]
    cols = np.arange(x, x + w, dtype=np.int64)[None, :, None]
    chans = np.arange(C, dtype=np.int64)[None, None, :]
    return (rows * W + cols) * C + chans


def _noisy(clean: np.ndarray, sigma: float, seed: int, clip: bool, idx: np.ndarray) -> np.ndarray:
    out = clean + snap(sigma * normals_at(seed, idx))
    if clip:
        out = np.clip(out, 0.0, 255.0)
    return out


def add_awgn(img: Image, sigma: float, seed: int, clip: bool = False) -> Image:
    """Return ``img + sigma * n`` with ``n`` drawn from the stream of ``seed``.

    With ``clip`` the result is clamped to [0, 255] the way MATLAB's
    ``imnoise`` does; this biases the noise near saturation.
    """
    _check_sigma(sigma)
    if sigma == 0:
        data = np.clip(img.data, 0.0, 255.0) if clip else img.data
        return Image(data, tag=img.tag)
    idx = _pixel_indices(img.shape)
    return Image(_noisy(img.data, sigma, seed, clip, idx), tag=img.tag)


def frame_seeds(base_seed: int) -> tuple[int, int]:
    return derive_seed(base_seed, 1), derive_seed(base_seed, 2)


@dataclass(frozen=True)
class NoisyFramePair:
    frame1: Image
    frame2: Image
    sigma_true: float
    seed1: int
    seed2: int
    clip: bool = False
    algorithm: str = ALGORITHM_ID

    def __post_init__(self):
        if self.frame1.shape != self.frame2.shape:
            raise ValueError("frames must have identical shapes")
        if self.seed1 == self.seed2:
            raise ValueError("frames must use different seeds")
        _check_sigma(self.sigma_true)


def make_frame_pair(img: Image, sigma: float, base_seed: int, clip: bool = False) -> NoisyFramePair:
    s1, s2 = frame_seeds(base_seed)
    return NoisyFramePair(
        add_awgn(img, sigma, s1, clip),
        add_awgn(img, sigma, s2, clip),
        float(sigma), s1, s2, clip,
    )


@dataclass(frozen=True)
class DifferenceImage:
    """Signed ``frame1 - frame2`` raster, shape ``(height, width, channels)``."""

    data: np.ndarray
    sigma_true: float = float("nan")

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"difference data must be HxWxC, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("difference data contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __neg__(self) -> "DifferenceImage":
        return DifferenceImage(-self.data, self.sigma_true)


def difference(pair: NoisyFramePair) -> DifferenceImage:
    return difference_of(pair.frame1, pair.frame2, pair.sigma_true)


def difference_of(frame1: Image, frame2: Image, sigma_true: float = float("nan")) -> DifferenceImage:
    if frame1.shape != frame2.shape:
        raise ValueError(f"frame shapes differ: {frame1.shape} vs {frame2.shape}")
    return DifferenceImage(frame1.data - frame2.data, sigma_true)


def difference_crop(img: Image, sigma: float, base_seed: int, clip: bool,
                    y: int, x: int, p: int) -> np.ndarray:
    """The ``p x p`` window at ``(y, x)`` of ``difference(make_frame_pair(...))``.

    Only the window's noise is generated; the result is bit-identical to
    cropping the full difference image.
    """
    _check_sigma(sigma)
    s1, s2 = frame_seeds(base_seed)
    idx = _pixel_indices(img.shape, y, x, p, p)
    clean = img.data[y : y + p, x : x + p]
    if sigma == 0:
        f = np.clip(clean, 0.0, 255.0) if clip else clean
        return f - f
    return _noisy(clean, sigma, s1, clip, idx) - _noisy(clean, sigma, s2, clip, idx)


@dataclass
class PatchBatch:
    """``patches`` is ``N x C x p x p``; ``offsets`` holds ``(y, x)`` corners."""

    patches: np.ndarray
    labels_sigma: np.ndarray
    labels_class: np.ndarray
    offsets: np.ndarray
    patch_size: int

    def __post_init__(self):
        n = len(self.patches)
        if not (len(self.labels_sigma) == len(self.labels_class) == len(self.offsets) == n):
            raise ValueError("patch and label counts differ")

    def __len__(self) -> int:
        return len(self.patches)

    @classmethod
    def empty(cls, channels: int, p: int) -> "PatchBatch":
        return cls(np.zeros((0, channels, p, p), dtype=np.float32), np.zeros(0),
                   np.zeros(0, dtype=np.int64), np.zeros((0, 2), dtype=np.int64), p)

    @classmethod
    def concat(cls, batches: list["PatchBatch"]) -> "PatchBatch":
        return cls(
            np.concatenate([b.patches for b in batches]),
            np.concatenate([b.labels_sigma for b in batches]),
            np.concatenate([b.labels_class for b in batches]),
            np.concatenate([b.offsets for b in batches]),
            batches[0].patch_size,
        )


def patch_corners(height: int, width: int, p: int, n: int, seed: int) -> np.ndarray:
    if p > min(height, width):
        raise ValueError(f"patch size {p} exceeds image size {height}x{width}")
    prng = Prng(seed)
    corners = np.zeros((n, 2), dtype=np.int64)
    for i in range(n):
        corners[i, 0] = prng.below(height - p + 1)
        corners[i, 1] = prng.below(width - p + 1)
    return corners


def sample_patches(diff: DifferenceImage, p: int, n: int, seed: int,
                   class_index: int = -1, dtype=np.float32) -> PatchBatch:
    """Draw ``n`` windows with uniform random corners (with replacement)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    corners = patch_corners(diff.height, diff.width, p, n, seed)
    if n == 0:
        return PatchBatch.empty(diff.channels, p)
    patches = np.stack([diff.data[y : y + p, x : x + p].transpose(2, 0, 1) for y, x in corners])
    return PatchBatch(
        patches.astype(dtype),
        np.full(n, diff.sigma_true),
        np.full(n, class_index, dtype=np.int64),
        corners,
        p,
    )
