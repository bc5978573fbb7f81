import math
import re

import numpy as np
import pytest
from hypothesis import given, strategies as st
from skimage.metrics import structural_similarity

from contextrecon.errors import InvalidInputError, ShapeError
from contextrecon.metrics import (MetricReport, aggregate, format_mean_std, magnitude_metrics,
                                  psnr, ssim)


def naive_ssim(a, b, rng, w=7):
    """Loop-based reference: uniform window, sample statistics, valid windows only."""
    c1, c2 = (0.01 * rng) ** 2, (0.03 * rng) ** 2
    vals = []
    for i in range(a.shape[0] - w + 1):
        for j in range(a.shape[1] - w + 1):
            pa = a[i:i + w, j:j + w].ravel()
            pb = b[i:i + w, j:j + w].ravel()
            ma, mb = pa.mean(), pb.mean()
            va, vb = pa.var(ddof=1), pb.var(ddof=1)
            cov = np.sum((pa - ma) * (pb - mb)) / (pa.size - 1)
            vals.append((2 * ma * mb + c1) * (2 * cov + c2)
                        / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_psnr_known_mse():
    ref = np.zeros((8, 8))
    ref[0, 0] = 1.0
    test = ref + 0.1
    test[0, 0] = 1.1
    # MSE 0.01 with peak 1 gives 20 dB
    assert psnr(ref, test) == pytest.approx(20.0, abs=1e-10)


def test_psnr_identical_is_inf(rng):
    a = rng.random((8, 8))
    assert psnr(a, a) == math.inf


def test_psnr_textbook(rng):
    a, b = rng.random((16, 16)), rng.random((16, 16))
    expect = 10 * np.log10(a.max() ** 2 / np.mean((a - b) ** 2))
    assert psnr(a, b) == pytest.approx(expect, rel=1e-12)
    assert psnr(a, b, 2.0) == pytest.approx(10 * np.log10(4 / np.mean((a - b) ** 2)))


@given(st.floats(0.1, 10), st.integers(0, 2**31))
def test_psnr_scale_invariant(scale, seed):
    r = np.random.default_rng(seed)
    a, b = r.random((8, 8)) + 0.1, r.random((8, 8))
    assert psnr(scale * a, scale * b) == pytest.approx(psnr(a, b), abs=1e-9)


def test_psnr_errors():
    with pytest.raises(ShapeError):
        psnr(np.ones((4, 4)), np.ones((4, 5)))
    with pytest.raises(InvalidInputError):
        psnr(np.zeros((4, 4)), np.ones((4, 4)))


def test_ssim_identical_is_one(rng):
    a = rng.random((16, 16))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_anticorrelated_is_negative(rng):
    a = rng.random((16, 16))
    # same local means, inverted structure
    assert ssim(a, 1.0 - a, data_range=1.0) < 0


def test_ssim_matches_loop_oracle(rng):
    a, b = rng.random((12, 13)), rng.random((12, 13))
    assert ssim(a, b, 1.0) == pytest.approx(naive_ssim(a, b, 1.0), abs=1e-12)


def test_ssim_matches_skimage(rng):
    a = rng.random((32, 32))
    b = a + 0.1 * rng.standard_normal((32, 32))
    ref = structural_similarity(a, b, data_range=1.0, win_size=7, use_sample_covariance=True,
                                gaussian_weights=False, full=True)[1][3:-3, 3:-3].mean()
    assert ssim(a, b, 1.0) == pytest.approx(ref, abs=1e-10)


@given(st.integers(0, 2**31))
def test_ssim_bounded_and_symmetric(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((10, 10)), r.random((10, 10))
    s = ssim(a, b, 1.0)
    assert -1 <= s <= 1
    assert s == pytest.approx(ssim(b, a, 1.0), abs=1e-12)


def test_ssim_small_image_rejected():
    with pytest.raises(ShapeError):
        ssim(np.ones((5, 5)), np.ones((5, 5)))


def test_magnitude_metrics_ignore_phase(rng):
    a = rng.random((16, 16)) + 0.1
    p, s = magnitude_metrics(a, a * np.exp(1j * rng.random((16, 16))))
    assert p > 250 and s == pytest.approx(1.0)


def test_aggregate_and_format():
    mean, std = aggregate([30.0, 32.0])
    assert (mean, std) == (31.0, 1.0)
    assert format_mean_std(mean, std) == "31.00 ± 1.00"
    assert re.fullmatch(r"-?\d+\.\d{2} ± \d+\.\d{2}", format_mean_std(0.12345, 0.0))
    with pytest.raises(InvalidInputError):
        aggregate([])


def test_report_outputs(tmp_path):
    rep = MetricReport()
    rep.add("a", 30.0, 0.8)
    rep.add("b", 32.0, 0.9)
    assert rep.psnr_db == (31.0, 1.0)
    rep.write_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "slice_id,psnr,ssim"
    summ = rep.summary(mask="uniform1d", gamma=1.0)
    assert summ["n"] == 2 and summ["mask"] == "uniform1d"
    assert summ["mean"]["ssim"] == pytest.approx(0.85)
