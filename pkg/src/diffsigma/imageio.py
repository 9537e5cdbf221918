"""Image container, PGM/PPM/PNG codecs and dataset manifests."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

SUPPORTED_SUFFIXES = (".pgm", ".ppm", ".png")

# ITU-R BT.601 luma
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# Synthesised values live on a 2**-32 grid. For |values| < 2**20 sums and
# differences of grid values are exact in float64, so image content cancels
# bit-for-bit in frame differences.
GRID_BITS = 32


def snap(values: np.ndarray) -> np.ndarray:
    return np.ldexp(np.rint(np.ldexp(values, GRID_BITS)), -GRID_BITS)


class ImageFormatError(ValueError):
    """Raised for unsupported, malformed or truncated image files."""


@dataclass(frozen=True)
class Image:
    """Raster of real intensities on the 0-255 scale.

    ``data`` has shape ``(height, width, channels)``, i.e. row-major with
    interleaved channels. The array is made read-only on construction.
    """

    data: np.ndarray
    tag: str = ""

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"image data must be HxWx1 or HxWx3, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data contains non-finite values")
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

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def to_gray(self) -> "Image":
        if self.channels == 1:
            return self
        return Image(snap(self.data @ LUMA_WEIGHTS), tag=self.tag)


def _parse_pnm(raw: bytes, path: str) -> Image:
    magic = raw[:2]
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise ImageFormatError(f"{path}: unsupported magic {magic!r}")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        # whitespace and comments between header fields
        while pos < len(raw) and (raw[pos : pos + 1].isspace() or raw[pos : pos + 1] == b"#"):
            if raw[pos : pos + 1] == b"#":
                end = raw.find(b"\n", pos)
                pos = len(raw) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(raw) and raw[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: malformed PNM header")
        fields.append(int(raw[start:pos]))
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise ImageFormatError(f"{path}: malformed PNM header")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: empty raster")
    n = width * height * channels
    payload = raw[pos : pos + n]
    if len(payload) < n:
        raise ImageFormatError(f"{path}: truncated payload ({len(payload)} of {n} bytes)")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Image(arr.astype(np.float64), tag=path)


def _load_png(path: str) -> Image:
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("RGBA", "LA", "PA") or (mode == "P" and "transparency" in im.info):
                raise ImageFormatError(f"{path}: alpha channels are not supported")
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise ImageFormatError(f"{path}: only 8-bit PNG is supported (mode {mode})")
            if mode == "P":
                im = im.convert("RGB")
                mode = "RGB"
            if mode == "1":
                im = im.convert("L")
                mode = "L"
            if mode not in ("L", "RGB"):
                raise ImageFormatError(f"{path}: unsupported PNG mode {mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except ImageFormatError:
        raise
    except (OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: cannot decode PNG ({exc})") from exc
    return Image(arr.astype(np.float64), tag=path)


def load_image(path: str | os.PathLike) -> Image:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    if raw[:1] == b"P":
        return _parse_pnm(raw, path)
    raise ImageFormatError(f"{path}: unrecognised image format")


def quantize(data: np.ndarray, clamp: bool) -> np.ndarray:
    """Convert intensities to bytes. ``clamp`` clips then rounds half to even."""
    data = np.asarray(data, dtype=np.float64)
    if clamp:
        data = np.clip(data, 0.0, 255.0)
    elif data.size and (data.min() < 0.0 or data.max() > 255.0):
        raise ValueError("image values outside [0, 255]; pass clamp=True to clip")
    return np.rint(data).astype(np.uint8)


def save_image(img: Image, path: str | os.PathLike, clamp: bool = False) -> None:
    """Write ``img`` as PGM/PPM (by channel count) or PNG, chosen by suffix."""
    path = os.fspath(path)
    pixels = quantize(img.data, clamp)
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        mode = "L" if img.channels == 1 else "RGB"
        arr = pixels[:, :, 0] if img.channels == 1 else pixels
        PILImage.fromarray(arr, mode=mode).save(path, format="PNG")
        return
    if suffix in (".pgm", ".ppm", ".pnm"):
        magic = b"P5" if img.channels == 1 else b"P6"
        header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
        with open(path, "wb") as fh:
            fh.write(header + pixels.tobytes())
        return
    raise ImageFormatError(f"{path}: cannot infer output format from suffix")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    width: int
    height: int
    channels: int


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if paths != sorted(paths):
            raise ValueError("manifest entries must be sorted by path")
        if len(set(paths)) != len(paths):
            raise ValueError("manifest contains duplicate paths")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def count(self) -> int:
        return len(self.entries)

    def to_json(self) -> str:
        return json.dumps(
            [
                {"path": e.path, "width": e.width, "height": e.height, "channels": e.channels}
                for e in self.entries
            ],
            indent=2,
        )


def scan_dataset(directory: str | os.PathLike, name: str | None = None) -> DatasetManifest:
    """List every supported image directly inside ``directory``, sorted by path."""
    directory = Path(directory)
    if not directory.is_dir():
        raise NotADirectoryError(f"{directory} is not a readable directory")
    entries = []
    for p in sorted(str(q) for q in directory.iterdir() if q.suffix.lower() in SUPPORTED_SUFFIXES):
        img = load_image(p)
        entries.append(ManifestEntry(p, img.width, img.height, img.channels))
    return DatasetManifest(name or directory.name, tuple(entries))
