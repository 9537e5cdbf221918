"""Labelled difference-patch datasets and the Adam training loop."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .imageio import DatasetManifest, Image, load_image
from .model import Model, predict_patches
from .nn.functional import mse_loss, softmax_cross_entropy
from .nn.optim import adam_step
from .noise import PatchBatch, difference_crop, patch_corners
from .rng import Prng, derive_seed

log = logging.getLogger(__name__)

TRAIN_STREAM = 0
VAL_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    levels: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0)
    samples_per_level: int = 400
    validation_per_level: int = 100
    lr: float = 0.01
    batch_size: int = 128
    l2: float = 1e-4
    epochs: int = 10
    validation_frequency: int = 50
    seed: int = 0
    patch_size: int = 32
    shuffle_each_epoch: bool = True
    channels: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        levels = tuple(float(s) for s in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("levels must be non-empty")
        if levels[0] <= 0 or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be positive and strictly increasing")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        # lr == 0 is accepted as a frozen run: no optimizer steps are taken
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")

    @classmethod
    def paper_scale(cls, **overrides) -> "TrainConfig":
        return replace(cls(samples_per_level=2000, validation_per_level=500, epochs=30, patch_size=64),
                       **overrides)

    def to_dict(self) -> dict:
        return asdict(self)


def _prepare(img: Image, channels: int) -> Image:
    if img.channels == channels:
        return img
    if channels == 1:
        return img.to_gray()
    raise ValueError("cannot build a 3-channel dataset from gray images")


def _build_split(images: list[Image], cfg: TrainConfig, per_level: int, stream: int, clip: bool) -> PatchBatch:
    p = cfg.patch_size
    n = per_level * len(cfg.levels)
    patches = np.zeros((n, cfg.channels, p, p), dtype=np.float32)
    sigmas = np.zeros(n)
    classes = np.zeros(n, dtype=np.int64)
    offsets = np.zeros((n, 2), dtype=np.int64)
    row = 0
    for li, sigma in enumerate(cfg.levels):
        for si in range(per_level):
            img = images[si % len(images)]
            base = derive_seed(cfg.seed, stream, li, si)
            (y, x), = patch_corners(img.height, img.width, p, 1, derive_seed(base, 3))
            crop = difference_crop(img, sigma, base, clip, y, x, p)
            patches[row] = crop.transpose(2, 0, 1)
            sigmas[row] = sigma
            classes[row] = li
            offsets[row] = (y, x)
            row += 1
    return PatchBatch(patches, sigmas, classes, offsets, p)


def build_dataset(manifest: DatasetManifest, cfg: TrainConfig, clip: bool = False,
                  images: list[Image] | None = None) -> tuple[PatchBatch, PatchBatch]:
    """One difference patch per synthetic frame pair, cycling through the manifest.

    Sample ``i`` of level ``l`` uses image ``i mod len(manifest)`` and pair
    seed ``derive_seed(cfg.seed, stream, l, i)`` with stream 0 for training
    and 1 for validation. ``images`` may pass pre-loaded manifest images.
    """
    if len(manifest) == 0:
        raise ValueError("manifest is empty")
    if images is None:
        images = [load_image(e.path) for e in manifest.entries]
    images = [_prepare(im, cfg.channels) for im in images]
    smallest = min(min(im.height, im.width) for im in images)
    if cfg.patch_size > smallest:
        raise ValueError(f"patch size {cfg.patch_size} exceeds smallest image side {smallest}")
    train = _build_split(images, cfg, cfg.samples_per_level, TRAIN_STREAM, clip)
    val = _build_split(images, cfg, cfg.validation_per_level, VAL_STREAM, clip)
    return train, val


def shuffled_indices(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates permutation of ``range(n)`` driven by ``Prng(seed)``."""
    perm = list(range(n))
    prng = Prng(seed)
    for i in range(n - 1, 0, -1):
        j = prng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)


@dataclass
class TrainHistory:
    iterations: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    validations: list[tuple[int, float]] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)

    def record(self, iteration: int, loss: float) -> None:
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("iterations must increase")
        self.iterations.append(iteration)
        self.losses.append(loss)

    def to_csv(self) -> str:
        vals = dict(self.validations)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "loss", "val_metric"])
        for it, loss in zip(self.iterations, self.losses):
            w.writerow([it, repr(loss), repr(vals[it]) if it in vals else ""])
        return buf.getvalue()

    def summary(self, cfg: TrainConfig, preset: str) -> dict:
        out = {"epochs": cfg.epochs, "wall_clock_s": sum(self.epoch_seconds), "seed": cfg.seed,
               "preset": preset}
        if "accuracy" in self.final_metrics:
            out["final_accuracy"] = self.final_metrics["accuracy"]
        else:
            out["final_mae_per_level"] = self.final_metrics.get("mae_per_level", {})
            out["final_mae"] = self.final_metrics.get("mae")
        return out

    def summary_json(self, cfg: TrainConfig, preset: str) -> str:
        return json.dumps(self.summary(cfg, preset), indent=2, sort_keys=True)


def score(predictions: np.ndarray, val: PatchBatch, head: str) -> dict:
    """Accuracy (classification) or MAE per level and overall (regression)."""
    if len(val) == 0:
        raise ValueError("validation set is empty")
    if head == "classification":
        # np.argmax resolves ties to the lowest index
        hits = np.argmax(predictions, axis=1) == val.labels_class
        return {"accuracy": float(hits.mean())}
    err = np.abs(np.asarray(predictions, dtype=np.float64).reshape(-1) - val.labels_sigma)
    per_level = {float(s): float(err[val.labels_sigma == s].mean()) for s in np.unique(val.labels_sigma)}
    return {"mae": float(err.mean()), "mae_per_level": per_level}


def validate(model: Model, val: PatchBatch) -> dict:
    if len(val) == 0:
        raise ValueError("validation set is empty")
    return score(predict_patches(model, val.patches), val, model.config.head)


def headline(metrics: dict) -> float:
    return metrics["accuracy"] if "accuracy" in metrics else metrics["mae"]


def train(model: Model, train_data: PatchBatch, val_data: PatchBatch | None, cfg: TrainConfig) -> TrainHistory:
    """Mini-batch Adam with per-epoch Fisher-Yates shuffling and no early stopping."""
    head = model.config.head
    if len(train_data) == 0:
        raise ValueError("training set is empty")
    if head == "classification" and train_data.labels_class.max() >= model.config.num_classes:
        raise ValueError("class labels exceed the classification head width")
    if head == "classification" and train_data.labels_class.min() < 0:
        raise ValueError("classification head needs class labels")
    params = [p for _, p in model.parameters()]
    history = TrainHistory()
    n = len(train_data)
    iteration = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = shuffled_indices(n, derive_seed(cfg.seed, 7, epoch)) if cfg.shuffle_each_epoch else np.arange(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = train_data.patches[idx]
            model.zero_grad()
            out = model.forward(x)
            if head == "classification":
                loss, grad = softmax_cross_entropy(out, train_data.labels_class[idx])
            else:
                target = train_data.labels_sigma[idx].reshape(-1, 1)
                loss, grad = mse_loss(out, target)
            model.backward(grad.astype(out.dtype))
            if cfg.lr > 0:
                for p in params:
                    adam_step(p, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.l2)
            iteration += 1
            history.record(iteration, loss)
            if val_data is not None and len(val_data) and iteration % cfg.validation_frequency == 0:
                metric = headline(validate(model, val_data))
                history.validations.append((iteration, metric))
                log.info("iter %d loss %.4f val %.4f", iteration, loss, metric)
        history.epoch_seconds.append(time.perf_counter() - t0)
        log.info("epoch %d done (%.1fs), loss %.4f", epoch + 1, history.epoch_seconds[-1], history.losses[-1])
    if val_data is not None and len(val_data):
        history.final_metrics = validate(model, val_data)
        if not history.validations or history.validations[-1][0] != iteration:
            history.validations.append((iteration, headline(history.final_metrics)))
    return history
