"""Metadata-conditioned diffusion-prior reconstruction of undersampled multi-coil MRI."""

from .core import SensitivityMaps, fft2c, from_channels, ifft2c, mvue, normalize_quantile, to_channels
from .espirit import CalibrationConfig, estimate_maps
from .masks import MaskKind, SamplingMask, apply_mask, make_mask, make_poisson2d, make_uniform1d
from .metadata import ScanMetadata, featurize, parse_prompt, to_prompt
from .metrics import psnr, ssim
from .sense import ForwardModel
from .solver import SolverConfig, dds_reconstruct, prox_data_consistency

__version__ = "0.1.0"

__all__ = [
    "CalibrationConfig", "ForwardModel", "MaskKind", "SamplingMask", "ScanMetadata",
    "SensitivityMaps", "SolverConfig", "apply_mask", "dds_reconstruct", "estimate_maps",
    "featurize", "fft2c", "from_channels", "ifft2c", "make_mask", "make_poisson2d",
    "make_uniform1d", "mvue", "normalize_quantile", "parse_prompt", "prox_data_consistency",
    "psnr", "ssim", "to_channels", "to_prompt",
]
