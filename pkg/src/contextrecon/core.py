"""Complex image and k-space primitives.

Images are 2D ``complex128`` arrays of shape ``(H, W)``; multi-coil k-space is
a ``(C, H, W)`` array. The Fourier pair is orthonormal and centered, so the DC
bin sits at index ``(H // 2, W // 2)`` and ``ifft2c`` is the exact adjoint of
``fft2c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScaleError, InvalidInputError, ShapeError

#: Pixels where the summed coil power falls below this are left out of the MVUE.
MVUE_SUPPORT_EPS = 1e-8


def _check_finite(arr, name="input"):
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")


def fft2c(img):
    """Centered, orthonormal 2D DFT over the last two axes."""
    img = np.asarray(img)
    _check_finite(img, "image")
    axes = (-2, -1)
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(img, axes=axes), axes=axes, norm="ortho"),
        axes=axes,
    )


def ifft2c(ksp):
    """Inverse (and adjoint) of :func:`fft2c`."""
    ksp = np.asarray(ksp)
    _check_finite(ksp, "k-space")
    axes = (-2, -1)
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(ksp, axes=axes), axes=axes, norm="ortho"),
        axes=axes,
    )


def to_channels(img):
    """Pack a complex image ``(..., H, W)`` into ``(..., 2, H, W)`` real/imag channels."""
    img = np.asarray(img)
    return np.stack([img.real, img.imag], axis=-3)


def from_channels(chans):
    """Inverse of :func:`to_channels`."""
    chans = np.asarray(chans)
    if chans.ndim < 3 or chans.shape[-3] != 2:
        raise ShapeError(f"expected a 2-channel array, got shape {chans.shape}")
    return chans[..., 0, :, :] + 1j * chans[..., 1, :, :]


def quantile_nearest_rank(values, q):
    """Nearest-rank ``q``-quantile: the ``ceil(q * n)``-th smallest value."""
    values = np.sort(np.ravel(values))
    n = values.size
    # round first so that e.g. 0.99 * 100 does not land on 99.00000000000001
    rank = int(np.ceil(round(q * n, 9)))
    rank = min(max(rank, 1), n)
    return float(values[rank - 1])


def normalize_quantile(img, q=0.99):
    """Divide ``img`` by the ``q``-quantile of its magnitudes.

    Returns
    -------
    normalized : ndarray
        ``img / scale``.
    scale : float
        The nearest-rank quantile of ``abs(img)``; multiply back to denormalize.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"quantile must lie in (0, 1], got {q}")
    img = np.asarray(img)
    _check_finite(img, "image")
    scale = quantile_nearest_rank(np.abs(img), q)
    if scale <= 0.0:
        raise DegenerateScaleError("quantile of image magnitude is zero")
    return img / scale, scale


@dataclass(frozen=True)
class SensitivityMaps:
    """Per-coil complex sensitivities plus the ESPIRiT eigenvalue map."""

    maps: np.ndarray
    eigenvalue_map: np.ndarray | None = None

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 3:
            raise ShapeError(f"maps must be (coils, H, W), got {maps.shape}")
        _check_finite(maps, "sensitivity maps")
        object.__setattr__(self, "maps", maps)
        if self.eigenvalue_map is None:
            object.__setattr__(self, "eigenvalue_map", np.ones(maps.shape[1:]))

    @property
    def num_coils(self):
        return self.maps.shape[0]

    @property
    def shape(self):
        return self.maps.shape[1:]

    def power(self):
        """Summed coil power ``sum_i |S_i|^2`` per pixel."""
        return np.sum(np.abs(self.maps) ** 2, axis=0)


def mvue(ksp, maps):
    """Coil-combine fully or partially sampled k-space into one complex image.

    Pixels whose summed coil power is at most ``MVUE_SUPPORT_EPS`` are set to zero.
    """
    ksp = np.asarray(ksp)
    smaps = maps.maps if isinstance(maps, SensitivityMaps) else np.asarray(maps)
    if ksp.shape != smaps.shape:
        raise ShapeError(f"k-space {ksp.shape} does not match maps {smaps.shape}")
    coil_imgs = ifft2c(ksp)
    num = np.sum(np.conj(smaps) * coil_imgs, axis=0)
    den = np.sum(np.abs(smaps) ** 2, axis=0)
    support = den > MVUE_SUPPORT_EPS
    out = np.zeros(ksp.shape[1:], dtype=np.complex128)
    out[support] = num[support] / den[support]
    return out
