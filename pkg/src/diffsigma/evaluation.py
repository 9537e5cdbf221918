"""Per-dataset, per-sigma error tables and estimator timing."""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Callable

import numpy as np

from .estimators import EstimatorResult, estimate_direct, estimate_mad, estimate_patch_min
from .imageio import DatasetManifest, Image, load_image
from .model import Model, predict_sigma
from .noise import NoisyFramePair, difference, make_frame_pair
from .rng import derive_seed

FORMATS = ("csv", "json", "text")


@dataclass(frozen=True)
class Estimator:
    """A named function from a frame pair to an estimate."""

    method: str
    fn: Callable[[NoisyFramePair], EstimatorResult]

    def __call__(self, pair: NoisyFramePair) -> EstimatorResult:
        return self.fn(pair)


def classical(method: str, patch: int = 16) -> Estimator:
    if method == "direct":
        return Estimator("direct", lambda pair: estimate_direct(difference(pair)))
    if method == "mad":
        return Estimator("mad", lambda pair: estimate_mad(difference(pair)))
    if method in ("patch_min", "patchmin"):
        # single-image baseline: sees frame1 only
        return Estimator("patch_min", lambda pair: estimate_patch_min(pair.frame1, patch))
    raise ValueError(f"unknown classical method {method!r}")


def cnn(model: Model, n_patches: int = 16, seed: int = 0) -> Estimator:
    if model.config.head != "regression":
        raise ValueError("evaluation needs a regression-headed model")
    return Estimator("cnn", lambda pair: predict_sigma(model, difference(pair), n_patches, seed))


@dataclass(frozen=True)
class EvalRow:
    dataset: str
    sigma: float
    method: str
    mae: float
    n: int


@dataclass(frozen=True)
class TimingRow:
    method: str
    dataset: str
    seconds: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    timing: list[TimingRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        keys = [(r.dataset, r.sigma, r.method) for r in self.rows]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (dataset, sigma, method) rows")
        if any(r.mae < 0 for r in self.rows):
            raise ValueError("negative mean absolute error")

    def extend(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(self.rows + other.rows, self.timing + other.timing, {**self.metadata, **other.metadata})

    def mae(self, dataset: str, sigma: float, method: str) -> float:
        for r in self.rows:
            if (r.dataset, r.sigma, r.method) == (dataset, sigma, method):
                return r.mae
        raise KeyError((dataset, sigma, method))


def _pair_seed(seed: int, sigma: float, image_index: int) -> int:
    # keyed by sigma value, not level position, so off-grid levels reuse nothing
    return derive_seed(seed, int(round(sigma * 1000)), image_index)


def _images(manifest: DatasetManifest, images):
    if images is not None:
        return images
    return [load_image(e.path) for e in manifest.entries]


def evaluate(estimators, manifest: DatasetManifest, levels, seed: int = 0, clip: bool = False,
             images: list[Image] | None = None, threads: int = 1) -> EvalReport:
    """Mean |sigma_hat - sigma| per level, one synthetic pair per (image, level).

    All estimators see the same pair. Pair seeds depend only on
    ``(seed, sigma, image index)``, never on the dataset name or on
    scheduling, so ``threads`` does not change the result.
    """
    if isinstance(estimators, Estimator):
        estimators = [estimators]
    if len(manifest) == 0:
        raise ValueError("manifest is empty")
    levels = [float(s) for s in levels]
    if not levels:
        raise ValueError("levels must be non-empty")
    imgs = _images(manifest, images)

    def run(task):
        i, sigma = task
        pair = make_frame_pair(imgs[i], sigma, _pair_seed(seed, sigma, i), clip)
        return [abs(est(pair).sigma_hat - sigma) for est in estimators]

    tasks = [(i, s) for s in levels for i in range(len(imgs))]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            errors = list(pool.map(run, tasks))
    else:
        errors = [run(t) for t in tasks]
    err = np.array(errors).reshape(len(levels), len(imgs), len(estimators))
    rows = [
        EvalRow(manifest.name, sigma, est.method, float(err[li, :, k].mean()), len(imgs))
        for li, sigma in enumerate(levels)
        for k, est in enumerate(estimators)
    ]
    meta = {"seed": seed, "clip": clip, "timestamp": datetime.now(timezone.utc).isoformat()}
    return EvalReport(rows, [], meta)


def time_estimator(estimators, manifest: DatasetManifest, sigma: float, repetitions: int = 3,
                   seed: int = 0, images: list[Image] | None = None) -> list[TimingRow]:
    """Median over repetitions of the mean per-image estimation time.

    Frame synthesis happens before the timed region.
    """
    if isinstance(estimators, Estimator):
        estimators = [estimators]
    if repetitions < 3:
        raise ValueError("repetitions must be at least 3")
    imgs = _images(manifest, images)
    pairs = [make_frame_pair(im, sigma, _pair_seed(seed, sigma, i)) for i, im in enumerate(imgs)]
    rows = []
    for est in estimators:
        per_rep = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            for pair in pairs:
                est(pair)
            per_rep.append((time.perf_counter() - t0) / len(pairs))
        rows.append(TimingRow(est.method, manifest.name, statistics.median(per_rep)))
    return rows


def _ordered(values):
    return list(dict.fromkeys(values))


def _sigma_label(sigma: float) -> str:
    return f"sigma = {sigma:g}"


def _text_table(report: EvalReport) -> str:
    methods = _ordered(r.method for r in report.rows)
    datasets = _ordered(r.dataset for r in report.rows)
    lookup = {(r.dataset, r.sigma, r.method): r for r in report.rows}
    header = ["Dataset", "Noise Level"] + methods
    lines = []
    for ds in datasets:
        sigmas = sorted({r.sigma for r in report.rows if r.dataset == ds})
        n = max(r.n for r in report.rows if r.dataset == ds)
        for j, s in enumerate(sigmas):
            cells = [lookup[(ds, s, m)].mae if (ds, s, m) in lookup else None for m in methods]
            lines.append([f"{ds}({n} Images)" if j == 0 else "", _sigma_label(s)]
                         + ["-" if c is None else f"{c:.2f}" for c in cells])
    widths = [max(len(row[k]) for row in [header] + lines) for k in range(len(header))]

    def fmt(row):
        left = [row[0].ljust(widths[0]), row[1].ljust(widths[1])]
        return "  ".join(left + [c.rjust(w) for c, w in zip(row[2:], widths[2:])]).rstrip()

    out = ["Noise estimation results (mean absolute error)", fmt(header)]
    out += [fmt(row) for row in lines]
    if report.timing:
        out += ["", timing_table(report.timing)]
    return "\n".join(out) + "\n"


def timing_table(timing: list[TimingRow]) -> str:
    methods = _ordered(t.method for t in timing)
    datasets = _ordered(t.dataset for t in timing)
    lookup = {(t.dataset, t.method): t.seconds for t in timing}
    header = ["Database"] + methods
    lines = [[ds] + [f"{lookup[(ds, m)]:.4f}" if (ds, m) in lookup else "-" for m in methods]
             for ds in datasets]
    widths = [max(len(row[k]) for row in [header] + lines) for k in range(len(header))]

    def fmt(row):
        return "  ".join([row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])])

    return "\n".join(["Noise estimation execution times in seconds", fmt(header)] + [fmt(r) for r in lines])


def render_report(report: EvalReport, fmt: str = "text") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "sigma", "method", "mae", "n"])
        for r in report.rows:
            w.writerow([r.dataset, f"{r.sigma:g}", r.method, f"{r.mae:.6f}", r.n])
        return buf.getvalue().encode()
    if fmt == "json":
        doc = {"rows": [asdict(r) for r in report.rows], "timing": [asdict(t) for t in report.timing],
               "metadata": report.metadata}
        return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()
    if fmt in ("text", "text-table"):
        return _text_table(report).encode()
    raise ValueError(f"unknown report format {fmt!r}; choose from {FORMATS}")


def parse_report(raw: bytes | str) -> EvalReport:
    doc = json.loads(raw)
    return EvalReport([EvalRow(**r) for r in doc["rows"]], [TimingRow(**t) for t in doc["timing"]],
                      doc.get("metadata", {}))
