"""Deterministic synthetic image corpora for tests, examples and benchmarks.

Content barely matters for two-frame estimation (the clean image cancels),
so a mix of flat, ramp, checkerboard, sinusoid and random textures stands
in for photographs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imageio import Image, save_image
from .rng import derive_seed, uniforms_at

KINDS = ("flat", "ramp", "checker", "waves", "random")


def synthetic_image(kind: str, height: int, width: int, seed: int = 0, channels: int = 1) -> Image:
    """Integer-valued test image in [0, 255]."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    u = uniforms_at(seed, np.arange(4))
    if kind == "flat":
        base = np.full((height, width), 40 + 175 * u[0])
    elif kind == "ramp":
        base = 255 * (x + y) / max(height + width - 2, 1)
    elif kind == "checker":
        cell = 2 + int(6 * u[0])
        base = 255.0 * (((y // cell) + (x // cell)) % 2)
    elif kind == "waves":
        base = 127.5 + 120 * np.sin(x / (2 + 6 * u[0])) * np.cos(y / (2 + 6 * u[1]))
    elif kind == "random":
        base = 255 * uniforms_at(seed, np.arange(height * width)).reshape(height, width)
    else:
        raise ValueError(f"unknown kind {kind!r}; choose from {KINDS}")
    planes = [np.roll(base, 3 * c, axis=1) for c in range(channels)]
    return Image(np.rint(np.stack(planes, axis=2)), tag=f"{kind}-{seed}")


def synthetic_corpus(n: int, height: int, width: int, seed: int = 0, channels: int = 1) -> list[Image]:
    """``n`` images cycling through :data:`KINDS` with per-image seeds."""
    return [synthetic_image(KINDS[i % len(KINDS)], height, width, derive_seed(seed, i), channels)
            for i in range(n)]


def write_corpus(directory, n: int, height: int, width: int, seed: int = 0, channels: int = 1,
                 suffix: str = ".png") -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(synthetic_corpus(n, height, width, seed, channels)):
        path = out / f"img{i:03d}{suffix}"
        save_image(img, path)
        paths.append(path)
    return paths
