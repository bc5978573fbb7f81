"""Image-quality metrics on magnitude images and their aggregation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError, ShapeError

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(ref, test):
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ShapeError(f"shape mismatch {ref.shape} vs {test.shape}")
    return ref, test


def _range(ref, data_range):
    if data_range is None:
        data_range = float(np.max(ref))
    if not data_range > 0:
        raise InvalidInputError("data_range must be positive")
    return data_range


def psnr(ref, test, data_range=None):
    """Peak signal-to-noise ratio in dB; ``inf`` when the images agree exactly.

    ``data_range`` defaults to the maximum of ``ref``.
    """
    ref, test = _pair(ref, test)
    data_range = _range(ref, data_range)
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def ssim(ref, test, data_range=None, window=SSIM_WINDOW):
    """Mean structural similarity over all fully contained ``window x window`` patches.

    Local statistics use a uniform window and unbiased (sample) covariances.
    """
    ref, test = _pair(ref, test)
    if ref.ndim != 2 or min(ref.shape) < window:
        raise ShapeError(f"image {ref.shape} smaller than the {window}x{window} window")
    data_range = _range(ref, data_range)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    n = window * window
    pa = sliding_window_view(ref, (window, window))
    pb = sliding_window_view(test, (window, window))
    mu_a = pa.mean(axis=(-2, -1))
    mu_b = pb.mean(axis=(-2, -1))
    norm = n / (n - 1)
    var_a = norm * ((pa**2).mean(axis=(-2, -1)) - mu_a**2)
    var_b = norm * ((pb**2).mean(axis=(-2, -1)) - mu_b**2)
    cov = norm * ((pa * pb).mean(axis=(-2, -1)) - mu_a * mu_b)
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def magnitude_metrics(ref, test):
    """PSNR and SSIM of ``|test|`` against ``|ref|`` with range ``max |ref|``."""
    a, b = np.abs(ref), np.abs(test)
    rng = float(a.max())
    return psnr(a, b, rng), ssim(a, b, rng)


def aggregate(values):
    """Arithmetic mean and population standard deviation."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError("cannot aggregate an empty list")
    return float(arr.mean()), float(arr.std())


def format_mean_std(mean, std):
    """Two-decimal ``"mean ± std"`` cell text."""
    return f"{mean:.2f} ± {std:.2f}"


@dataclass
class MetricReport:
    per_slice: list = field(default_factory=list)
    """``(slice_id, psnr, ssim)`` rows."""

    def add(self, slice_id, psnr_db, ssim_val):
        self.per_slice.append((str(slice_id), float(psnr_db), float(ssim_val)))

    @property
    def psnr_db(self):
        return aggregate(r[1] for r in self.per_slice)

    @property
    def ssim(self):
        return aggregate(r[2] for r in self.per_slice)

    def write_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slice_id", "psnr", "ssim"])
            for sid, p, s in self.per_slice:
                w.writerow([sid, repr(p), repr(s)])

    def summary(self, **context):
        """JSON-ready summary; ``context`` carries mask, accel, gamma and the like."""
        pm, ps = self.psnr_db
        sm, ss = self.ssim
        return {**context, "n": len(self.per_slice),
                "mean": {"psnr": pm, "ssim": sm}, "std": {"psnr": ps, "ssim": ss}}

    def write_json(self, path, **context):
        Path(path).write_text(json.dumps(self.summary(**context), indent=2, sort_keys=True))
