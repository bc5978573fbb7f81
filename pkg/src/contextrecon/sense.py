"""SENSE forward model ``y_i = D F S_i x + n``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SensitivityMaps, fft2c, ifft2c
from .errors import ConfigError, ShapeError
from .masks import SamplingMask, apply_mask, full_mask


@dataclass(frozen=True)
class ForwardModel:
    maps: SensitivityMaps
    mask: SamplingMask
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not isinstance(self.maps, SensitivityMaps):
            object.__setattr__(self, "maps", SensitivityMaps(self.maps))
        if self.maps.shape != self.mask.shape:
            raise ShapeError(f"maps grid {self.maps.shape} != mask grid {self.mask.shape}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")

    @classmethod
    def identity(cls, height, width):
        """Single coil with unit sensitivity and full sampling, i.e. ``A = F``."""
        return cls(SensitivityMaps(np.ones((1, height, width))), full_mask(height, width))

    @property
    def shape(self):
        return self.mask.shape

    @property
    def num_coils(self):
        return self.maps.num_coils

    def _check_image(self, x):
        x = np.asarray(x)
        if x.shape != self.shape:
            raise ShapeError(f"image shape {x.shape} != model grid {self.shape}")
        return x

    def forward(self, x):
        """Noiseless measurement ``D F (S_i x)`` for every coil."""
        x = self._check_image(x)
        return apply_mask(fft2c(self.maps.maps * x), self.mask)

    def adjoint(self, y):
        """``sum_i conj(S_i) F^H D y_i``."""
        y = np.asarray(y)
        if y.shape != (self.num_coils, *self.shape):
            raise ShapeError(f"k-space shape {y.shape} does not match model")
        return np.sum(np.conj(self.maps.maps) * ifft2c(apply_mask(y, self.mask)), axis=0)

    def normal(self, x):
        return self.adjoint(self.forward(x))

    def measure(self, x, seed):
        """Forward model plus circular Gaussian noise on the sampled entries only.

        Real and imaginary parts each receive independent ``N(0, noise_sigma**2)``.
        """
        y = self.forward(x)
        if self.noise_sigma == 0:
            return y
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        return y + apply_mask(self.noise_sigma * noise, self.mask)

    def zero_filled(self, y):
        """Zero-filled adjoint reconstruction ``A^H y``."""
        return self.adjoint(y)
