import json

import numpy as np
import pytest

from diffsigma.estimators import EstimatorResult
from diffsigma.evaluation import (
    EvalReport, EvalRow, Estimator, TimingRow, classical, cnn, evaluate, parse_report, render_report,
    time_estimator, timing_table,
)
from diffsigma.imageio import DatasetManifest, Image, ManifestEntry
from diffsigma.model import build_network, micro_config

LEVELS = (5, 10, 15, 20, 25)


def _dataset(name, n, h, w, seed, kind="random"):
    rng = np.random.default_rng(seed)
    if kind == "flat":
        images = [Image(np.full((h, w), 128.0)) for _ in range(n)]
    else:
        images = [Image(np.rint(rng.uniform(0, 255, (h, w)))) for _ in range(n)]
    manifest = DatasetManifest(name, tuple(ManifestEntry(f"/mem/{name}/{i:02d}.png", w, h, 1) for i in range(n)))
    return manifest, images


ORACLE = Estimator("oracle", lambda pair: EstimatorResult.from_channels([pair.sigma_true], "oracle"))


def test_oracle_estimator_zero_mae():
    m, imgs = _dataset("A", 3, 16, 16, 0)
    report = evaluate(ORACLE, m, LEVELS, images=imgs)
    assert [r.mae for r in report.rows] == [0.0] * 5
    assert [r.sigma for r in report.rows] == [5.0, 10.0, 15.0, 20.0, 25.0]


def test_direct_mae_small_on_large_images():
    m, imgs = _dataset("big", 2, 512, 768, 1)
    report = evaluate(classical("direct"), m, [25], images=imgs)
    assert report.rows[0].mae <= 0.05


def test_direct_rows_identical_across_datasets():
    a, ia = _dataset("A", 3, 32, 48, 0)
    b, ib = _dataset("B", 3, 32, 48, 1, kind="flat")
    ra = evaluate(classical("direct"), a, LEVELS, seed=4, images=ia)
    rb = evaluate(classical("direct"), b, LEVELS, seed=4, images=ib)
    assert [r.mae for r in ra.rows] == [r.mae for r in rb.rows]


def test_direct_mae_decreases_with_size():
    maes = []
    for side in (16, 64, 256):
        m, imgs = _dataset(f"s{side}", 8, side, side, 2)
        maes.append(np.mean([r.mae for r in evaluate(classical("direct"), m, LEVELS, images=imgs).rows]))
    assert maes[0] > maes[1] > maes[2]


def test_thread_invariance():
    m, imgs = _dataset("A", 4, 32, 32, 3)
    ests = [classical("direct"), classical("mad"), classical("patch_min", 8)]
    one = evaluate(ests, m, LEVELS, images=imgs, threads=1)
    four = evaluate(ests, m, LEVELS, images=imgs, threads=4)
    assert render_report(one, "csv") == render_report(four, "csv")


def test_cnn_requires_regression_head():
    with pytest.raises(ValueError):
        cnn(build_network(micro_config("classification")))


def test_cnn_path_runs():
    m, imgs = _dataset("A", 2, 40, 40, 5)
    report = evaluate(cnn(build_network(micro_config()), n_patches=2), m, [10], images=imgs)
    assert report.rows[0].method == "cnn" and report.rows[0].n == 2


def test_empty_inputs():
    m, imgs = _dataset("A", 1, 16, 16, 0)
    with pytest.raises(ValueError):
        evaluate(ORACLE, DatasetManifest("none", ()), LEVELS, images=[])
    with pytest.raises(ValueError):
        evaluate(ORACLE, m, [], images=imgs)


def test_unknown_classical_method():
    with pytest.raises(ValueError):
        classical("wavelet")


def test_report_invariants():
    row = EvalRow("A", 5.0, "direct", 0.1, 3)
    with pytest.raises(ValueError):
        EvalReport([row, row])
    with pytest.raises(ValueError):
        EvalReport([EvalRow("A", 5.0, "direct", -0.1, 3)])


def test_csv_header_only_and_one_row():
    assert render_report(EvalReport(), "csv") == b"dataset,sigma,method,mae,n\n"
    lines = render_report(EvalReport([EvalRow("Kodak", 5.0, "direct", 0.125, 24)]), "csv").decode().splitlines()
    assert lines[1].split(",") == ["Kodak", "5", "direct", "0.125000", "24"]


def test_json_round_trip():
    m, imgs = _dataset("A", 2, 16, 16, 6)
    report = evaluate([classical("direct"), ORACLE], m, LEVELS, images=imgs)
    report.timing.append(TimingRow("direct", "A", 0.001))
    raw = render_report(report, "json")
    assert render_report(parse_report(raw), "json") == raw
    assert json.loads(raw)["metadata"]["seed"] == 0


def test_unknown_format():
    with pytest.raises(ValueError):
        render_report(EvalReport(), "xml")


def test_evaluate_deterministic_apart_from_timestamp():
    m, imgs = _dataset("A", 2, 24, 24, 7)
    a = evaluate(classical("mad"), m, LEVELS, seed=9, images=imgs)
    b = evaluate(classical("mad"), m, LEVELS, seed=9, images=imgs)
    for fmt in ("csv", "text"):
        assert render_report(a, fmt) == render_report(b, fmt)


def test_timing_rows():
    m, imgs = _dataset("McMaster", 2, 50, 50, 8)
    ests = [classical("direct"), classical("mad")]
    with pytest.raises(ValueError):
        time_estimator(ests, m, 25, repetitions=2, images=imgs)
    rows = time_estimator(ests, m, 25, repetitions=3, images=imgs)
    assert [r.method for r in rows] == [e.method for e in ests]
    assert all(0 <= r.seconds < 1 for r in rows)
    table = timing_table(rows).splitlines()
    assert table[0] == "Noise estimation execution times in seconds"
    assert table[1].split() == ["Database", "direct", "mad"]
    assert table[2].split()[0] == "McMaster"


def test_text_table_layout():
    rows = [EvalRow(ds, float(s), meth, s / 100, n) for ds, n in (("Kodak", 24), ("McMaster", 18))
            for s in (25, 5, 15) for meth in ("cnn", "direct")]
    text = render_report(EvalReport(rows), "text").decode().splitlines()
    assert text[0] == "Noise estimation results (mean absolute error)"
    assert text[1].split() == ["Dataset", "Noise", "Level", "cnn", "direct"]
    assert text[2].startswith("Kodak(24 Images)") and "sigma = 5" in text[2]
    assert [line.split("sigma = ")[1].split()[0] for line in text[2:]] == ["5", "15", "25"] * 2
    assert text[5].startswith("McMaster(18 Images)")
    assert text[3].startswith(" ")
