"""ESPIRiT sensitivity estimation from an autocalibration region."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import SensitivityMaps, ifft2c
from .errors import CalibrationError, ConfigError, NumericalError
from .masks import acs_region


@dataclass(frozen=True)
class CalibrationConfig:
    kernel_size: int = 6
    sv_threshold: float = 0.01
    eig_crop: float = 0.85

    def __post_init__(self):
        if self.kernel_size < 1:
            raise ConfigError("kernel_size must be positive")
        if not 0.0 < self.sv_threshold < 1.0:
            raise ConfigError("sv_threshold must lie in (0, 1)")
        if not 0.0 <= self.eig_crop <= 1.0:
            raise ConfigError("eig_crop must lie in [0, 1]")


def build_calibration_matrix(acs, kernel_size):
    """Block-Hankel calibration matrix of a ``(coils, h, w)`` ACS block.

    Row ``i * (w - k + 1) + j`` holds the ``k x k`` patch whose top-left corner is
    ``(i, j)``; column ``c * k**2 + dy * k + dx`` reads ``acs[c, i + dy, j + dx]``.
    """
    acs = np.asarray(acs)
    k = int(kernel_size)
    num_coils, h, w = acs.shape
    if h < k or w < k:
        raise ConfigError(f"ACS region {h}x{w} smaller than kernel {k}x{k}")
    # (coils, rows_i, rows_j, k, k)
    patches = sliding_window_view(acs, (k, k), axis=(1, 2))
    patches = patches.transpose(1, 2, 0, 3, 4)
    return patches.reshape((h - k + 1) * (w - k + 1), num_coils * k * k)


def _gauge_fix(maps):
    """Rotate each pixel's coil vector so the first coil is real and nonnegative."""
    ref = maps[0]
    mag = np.abs(ref)
    phase = np.ones_like(ref)
    nz = mag > 0
    phase[nz] = np.conj(ref[nz]) / mag[nz]
    out = maps * phase
    out[0] = np.abs(out[0])
    return out


def estimate_maps(ksp, cfg=None, mask=None):
    """Estimate one set of coil sensitivities from the fully sampled k-space center.

    Parameters
    ----------
    ksp : ndarray, shape (coils, H, W)
        Multi-coil k-space, zero where unsampled.
    cfg : CalibrationConfig, optional
    mask : SamplingMask or ndarray, optional
        Sampling pattern; inferred from the nonzero support of ``ksp`` if omitted.

    Returns
    -------
    SensitivityMaps
        Maps with unit summed power where the top eigenvalue reaches
        ``cfg.eig_crop`` and zero elsewhere.
    """
    cfg = cfg or CalibrationConfig()
    ksp = np.asarray(ksp, dtype=np.complex128)
    num_coils, height, width = ksp.shape
    if mask is None:
        kept = np.any(ksp != 0, axis=0)
    else:
        kept = np.asarray(getattr(mask, "kept", mask), bool)
    region = acs_region(kept)
    if region is None:
        raise CalibrationError("no fully sampled calibration region around DC")
    acs = ksp[:, region[0], region[1]]
    k = cfg.kernel_size
    if min(acs.shape[1:]) < k:
        raise CalibrationError(
            f"calibration region {acs.shape[1]}x{acs.shape[2]} smaller than kernel {k}"
        )

    mat = build_calibration_matrix(acs, k)
    try:
        _, svals, vh = np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD of calibration matrix failed: {exc}") from exc
    if svals[0] <= 0:
        raise CalibrationError("calibration region carries no signal")
    vh = vh[svals > cfg.sv_threshold * svals[0]]
    kernels = vh.reshape(len(vh), num_coils, k, k)

    padded = np.zeros((len(vh), num_coils, height, width), dtype=np.complex128)
    y0, x0 = height // 2 - k // 2, width // 2 - k // 2
    padded[..., y0:y0 + k, x0:x0 + k] = kernels
    img_kernels = ifft2c(padded) * np.sqrt(height * width) / k

    # per-pixel Gram matrix sum_n v_n v_n^H, shape (H, W, coils, coils)
    v = img_kernels.transpose(2, 3, 1, 0)
    gram = v @ np.conj(v.swapaxes(-1, -2))
    try:
        evals, evecs = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"per-pixel eigendecomposition failed: {exc}") from exc
    top_val = evals[..., -1]
    maps = evecs[..., :, -1].transpose(2, 0, 1)
    maps = _gauge_fix(maps)
    support = top_val >= cfg.eig_crop
    maps = np.where(support, maps, 0.0)
    return SensitivityMaps(maps, np.clip(top_val, 0.0, 1.0))
