import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diffsigma.estimators import estimate_direct, estimate_mad, estimate_patch_min
from diffsigma.imageio import Image
from diffsigma.noise import DifferenceImage, add_awgn, difference, make_frame_pair


def _synthetic_difference(sigma, seed=0, shape=(256, 256)):
    return difference(make_frame_pair(Image(np.full(shape, 100.0)), sigma, seed))


def test_direct_zero_and_constant():
    assert estimate_direct(DifferenceImage(np.zeros((8, 8)))).sigma_hat == 0
    assert estimate_direct(DifferenceImage(np.full((8, 8), 3.5))).sigma_hat == 0


def test_direct_sigma_25():
    assert abs(estimate_direct(_synthetic_difference(25, 1)).sigma_hat - 25) <= 0.3


def test_direct_matches_formula():
    d = _synthetic_difference(7, 2, (20, 30))
    x = d.data.reshape(-1)
    expected = math.sqrt(((x - x.mean()) ** 2).sum() / (x.size - 1)) / math.sqrt(2)
    assert estimate_direct(d).sigma_hat == pytest.approx(expected, rel=1e-12)


def test_degenerate_input():
    for fn in (estimate_direct, estimate_mad):
        with pytest.raises(ValueError):
            fn(DifferenceImage(np.zeros((1, 1))))


def test_multichannel_average():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(64, 64, 3)) * np.array([1.0, 2.0, 3.0]) * math.sqrt(2)
    r = estimate_direct(DifferenceImage(data))
    assert len(r.per_channel) == 3
    assert r.sigma_hat == pytest.approx(np.mean(r.per_channel))
    assert r.per_channel[0] < r.per_channel[1] < r.per_channel[2]


def test_mad_zero_and_sigma_10():
    assert estimate_mad(DifferenceImage(np.zeros((8, 8)))).sigma_hat == 0
    assert abs(estimate_mad(_synthetic_difference(10, 3)).sigma_hat - 10) <= 0.2


def test_mad_robust_to_outliers():
    d = _synthetic_difference(10, 4).data.copy()
    rng = np.random.default_rng(4)
    idx = rng.choice(d.size, d.size // 100, replace=False)
    d.reshape(-1)[idx] = rng.choice([-1000.0, 1000.0], idx.size)
    spoiled = DifferenceImage(d)
    assert abs(estimate_mad(spoiled).sigma_hat - 10) <= 0.5
    assert abs(estimate_direct(spoiled).sigma_hat - 10) > 5


def test_patch_min_flat_noiseless():
    assert estimate_patch_min(Image(np.full((64, 64), 90.0)), 16).sigma_hat == 0


def test_patch_min_flat_noisy():
    noisy = add_awgn(Image(np.full((256, 256), 128.0)), 15, 6)
    assert 12 <= estimate_patch_min(noisy, 16).sigma_hat <= 15.5


def test_patch_min_texture_dependence(textured):
    flat = Image(np.full((256, 256), 128.0))
    est_flat = estimate_patch_min(add_awgn(flat, 5, 7), 16).sigma_hat
    est_tex = estimate_patch_min(add_awgn(textured, 5, 7), 16).sigma_hat
    assert est_tex > est_flat


def test_patch_min_too_large():
    with pytest.raises(ValueError):
        estimate_patch_min(Image(np.zeros((8, 8))), 9)


@given(st.floats(0, 50), st.integers(0, 1000))
def test_scale_equivariance(k, seed):
    d = DifferenceImage(np.random.default_rng(seed).normal(size=(16, 16, 1)))
    for fn in (estimate_direct, estimate_mad):
        scaled = fn(DifferenceImage(d.data * k)).sigma_hat
        assert scaled == pytest.approx(k * fn(d).sigma_hat, rel=1e-9, abs=1e-12)


@given(st.integers(0, 1000))
def test_sign_invariance(seed):
    d = DifferenceImage(np.random.default_rng(seed).normal(size=(32, 32, 1)) * 10)
    assert estimate_direct(d).sigma_hat == pytest.approx(estimate_direct(-d).sigma_hat, rel=1e-12)
    assert estimate_mad(d).sigma_hat == pytest.approx(estimate_mad(-d).sigma_hat, rel=1e-12)
    img, neg = Image(d.data), Image(-d.data)
    assert estimate_patch_min(img, 8).sigma_hat == pytest.approx(estimate_patch_min(neg, 8).sigma_hat, rel=1e-12)
