"""Metadata-controlled complex phantoms and smooth coil sensitivities.

Each phantom is a painter's-algorithm composite of ellipses whose tissue
classes carry relaxometry parameters ``(rho, T1, T2)``. Pixel intensity follows
a spoiled steady-state signal model

    I = rho * sin(a) * (1 - E1) / (1 - cos(a) * E1) * exp(-TE / T2eff),  E1 = exp(-TR / T1)

which reduces to ``rho * (1 - E1) * exp(-TE / T2)`` at a 90 degree flip. When TI
is given an inversion factor ``|1 - 2 exp(-TI / T1)|`` multiplies in. Contrast
labels apply per-class multipliers (fat suppression zeroes the fat class), the
slice index moves structures along a fixed trajectory, each pathology label
paints its own lesion, age thins cartilage / widens ventricles, and sex changes
body width.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import SensitivityMaps, normalize_quantile
from .errors import ConfigError
from .metadata import (
    FASTMRI_BRAIN,
    FASTMRI_KNEE,
    Anatomy,
    Contrast,
    ScanMetadata,
    Sequence,
    Sex,
    to_prompt,
)


class Tissue(enum.IntEnum):
    BACKGROUND = 0
    FAT = 1
    MUSCLE = 2
    MARROW = 3
    CORTEX = 4
    CARTILAGE = 5
    FLUID = 6
    MENISCUS = 7
    CSF = 8
    GRAY = 9
    WHITE = 10
    LESION = 11
    MASS = 12


#: (proton density, T1 ms, T2 ms)
RELAXOMETRY = {
    Tissue.BACKGROUND: (0.0, 1000.0, 100.0),
    Tissue.FAT: (0.9, 350.0, 90.0),
    Tissue.MUSCLE: (0.7, 1100.0, 35.0),
    Tissue.MARROW: (0.85, 400.0, 70.0),
    Tissue.CORTEX: (0.05, 1000.0, 5.0),
    Tissue.CARTILAGE: (0.75, 1000.0, 40.0),
    Tissue.FLUID: (1.0, 3000.0, 500.0),
    Tissue.MENISCUS: (0.3, 1000.0, 10.0),
    Tissue.CSF: (1.0, 4000.0, 2000.0),
    Tissue.GRAY: (0.8, 1300.0, 100.0),
    Tissue.WHITE: (0.7, 800.0, 80.0),
    Tissue.LESION: (0.9, 1500.0, 200.0),
    Tissue.MASS: (0.85, 1400.0, 120.0),
}

#: Per-contrast class multipliers on top of the signal model.
CONTRAST_WEIGHTS = {
    Contrast.PD: {},
    Contrast.PDFS: {Tissue.FAT: 0.0, Tissue.MARROW: 0.2, Tissue.FLUID: 1.3},
    Contrast.T1: {Tissue.WHITE: 1.3, Tissue.CSF: 0.3},
    Contrast.T1PRE: {Tissue.WHITE: 1.3, Tissue.CSF: 0.3, Tissue.LESION: 0.5},
    Contrast.T1POST: {Tissue.WHITE: 1.2, Tissue.CSF: 0.3, Tissue.MASS: 2.5,
                      Tissue.LESION: 2.0, Tissue.CORTEX: 6.0},
    Contrast.T2: {Tissue.CSF: 1.3, Tissue.WHITE: 0.8, Tissue.FAT: 0.7},
    Contrast.FLAIR: {Tissue.CSF: 0.0, Tissue.FAT: 0.0, Tissue.LESION: 1.5},
}

#: Effective transverse decay relative to T2 per sequence family.
T2_SCALE = {None: 1.0, Sequence.TURBOSPINECHO: 1.0, Sequence.FLASH: 0.6, Sequence.QDESS: 0.5}

SUPERSAMPLE = 2


@dataclass(frozen=True)
class PhantomSpec:
    grid: tuple = (64, 64)
    anatomy_template: Anatomy = Anatomy.KNEE
    num_ellipses: int = 6
    rng_seed: int = 0
    num_coils: int = 4

    def __post_init__(self):
        if self.num_ellipses < 1:
            raise ConfigError("num_ellipses must be positive")
        if self.num_coils < 1:
            raise ConfigError("num_coils must be positive")


@dataclass
class Phantom:
    image: np.ndarray
    maps: SensitivityMaps
    labels: np.ndarray
    """Tissue class per pixel, or -1 where a pixel mixes classes."""
    intensities: dict = field(default_factory=dict)


def tissue_intensity(tissue, md):
    """Closed-form signal of one tissue class under ``md`` (before texture/phase)."""
    rho, t1, t2 = RELAXOMETRY[Tissue(tissue)]
    if rho == 0.0:
        return 0.0
    signal = rho
    if md.tr_ms is not None:
        e1 = np.exp(-md.tr_ms / t1)
        if md.flip_angle_deg is not None:
            a = np.deg2rad(md.flip_angle_deg)
            signal *= np.sin(a) * (1.0 - e1) / (1.0 - np.cos(a) * e1)
        else:
            signal *= 1.0 - e1
    if md.te_ms is not None:
        signal *= np.exp(-md.te_ms / (t2 * T2_SCALE[md.sequence]))
    if md.ti_ms is not None:
        signal *= abs(1.0 - 2.0 * np.exp(-md.ti_ms / t1))
    if md.contrast is not None:
        signal *= CONTRAST_WEIGHTS[md.contrast].get(Tissue(tissue), 1.0)
    return float(signal)


def _grid(height, width, factor):
    """Normalized sample coordinates in [-1, 1), supersampled by ``factor``."""
    sub = (np.arange(factor) + 0.5) / factor - 0.5
    ys = ((np.arange(height)[:, None] + sub[None, :]).ravel() - height // 2) / (height / 2)
    xs = ((np.arange(width)[:, None] + sub[None, :]).ravel() - width // 2) / (width / 2)
    return np.meshgrid(ys, xs, indexing="ij")


def _ellipse(yy, xx, cy, cx, ay, ax, angle=0.0):
    c, s = np.cos(angle), np.sin(angle)
    dy, dx = yy - cy, xx - cx
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0


class _Jitter:
    """Fixed-order draws so that metadata never shifts the random stream."""

    def __init__(self, seed, n_texture):
        rng = np.random.default_rng(seed)
        self.geom = rng.uniform(-1.0, 1.0, size=16)
        self.lesion = rng.uniform(-1.0, 1.0, size=(8, 2))
        self.phase = rng.uniform(-1.0, 1.0, size=5)
        self.coil = rng.uniform(-1.0, 1.0, size=3)
        self.texture = rng.uniform(-1.0, 1.0, size=(n_texture, 5))


def _paint_knee(yy, xx, md, jit):
    lab = np.zeros(yy.shape, dtype=np.int8)
    g = jit.geom
    t = (md.slice_index if md.slice_index is not None else 15) / 30.0
    shift = 0.12 * (t - 0.5) + 0.02 * g[0]
    width_scale = 0.9 if md.sex is Sex.F else 1.0
    body_ax = (0.72 + 0.03 * g[1]) * width_scale
    body_ay = 0.9
    lab[_ellipse(yy, xx, 0.0, shift, body_ay, body_ax)] = Tissue.FAT
    lab[_ellipse(yy, xx, 0.0, shift, body_ay - 0.08, body_ax - 0.09)] = Tissue.MUSCLE

    gap = 0.09 + 0.04 * np.cos(2 * np.pi * t) + 0.01 * g[2]
    joint_y = 0.02 * g[3]
    bone_ax = (0.2 + 0.14 * np.sin(np.pi * t) + 0.02 * g[4]) * width_scale
    fem_ay, tib_ay = 0.42, 0.38
    fem_cy = joint_y - gap / 2 - fem_ay
    tib_cy = joint_y + gap / 2 + tib_ay
    degen = 1.0 - 0.4 * (md.age_years / 100.0 if md.age_years is not None else 0.0)
    cart = 0.055 * degen

    fem_cart = _ellipse(yy, xx, fem_cy, shift, fem_ay + cart, bone_ax + cart) & (yy > fem_cy)
    tib_cart = _ellipse(yy, xx, tib_cy, shift, tib_ay + cart, bone_ax + 0.02 + cart) & (yy < tib_cy)
    lab[fem_cart | tib_cart] = Tissue.CARTILAGE
    lab[_ellipse(yy, xx, joint_y, shift, gap / 2 + 0.01, bone_ax * 0.9)] = Tissue.FLUID
    for side in (-1.0, 1.0):
        men = _ellipse(yy, xx, joint_y, shift + side * (bone_ax + 0.02), gap / 2 + 0.03, 0.09)
        lab[men] = Tissue.MENISCUS
    femur = _ellipse(yy, xx, fem_cy, shift, fem_ay, bone_ax)
    for cy, ay, ax in ((fem_cy, fem_ay, bone_ax), (tib_cy, tib_ay, bone_ax + 0.02)):
        lab[_ellipse(yy, xx, cy, shift, ay, ax)] = Tissue.CORTEX
        lab[_ellipse(yy, xx, cy, shift, ay - 0.045, ax - 0.045)] = Tissue.MARROW

    lj = jit.lesion
    for label in md.pathologies:
        if label == "Meniscus Tear":
            lab[_ellipse(yy, xx, joint_y, shift - bone_ax - 0.02 + 0.02 * lj[0, 0],
                         0.012, 0.07, angle=0.4)] = Tissue.LESION
        elif label == "Displaced Meniscal Tissue":
            lab[_ellipse(yy, xx, joint_y + 0.01 * lj[1, 1], shift + 0.25 * bone_ax + 0.03 * lj[1, 0],
                         gap / 2 + 0.02, 0.06)] = Tissue.MENISCUS
        elif label == "Bone-Subchondral edema":
            lab[_ellipse(yy, xx, fem_cy + fem_ay - 0.14, shift + 0.4 * bone_ax * lj[2, 0],
                         0.1, 0.13)] = Tissue.LESION
        elif label == "Cartilage Lesion":
            lo = shift - 0.5 * bone_ax + 0.05 * lj[3, 0]
            lab[fem_cart & ~femur & (xx > lo) & (xx < lo + 0.16)] = Tissue.FLUID
    return lab


def _paint_brain(yy, xx, md, jit):
    lab = np.zeros(yy.shape, dtype=np.int8)
    g = jit.geom
    t = (md.slice_index if md.slice_index is not None else 12) / 25.0
    scale = 0.78 + 0.2 * np.sin(np.pi * (0.2 + 0.6 * t)) + 0.02 * g[0]
    width_scale = 0.93 if md.sex is Sex.F else 1.0
    ay, ax = 0.92 * scale, 0.78 * scale * width_scale
    cy = 0.02 * g[1]
    rings = ((Tissue.FAT, 0.0), (Tissue.CORTEX, 0.06), (Tissue.CSF, 0.12),
             (Tissue.GRAY, 0.16), (Tissue.WHITE, 0.32))
    for tissue, inset in rings:
        lab[_ellipse(yy, xx, cy, 0.0, ay - inset, ax - inset)] = tissue

    age = md.age_years / 100.0 if md.age_years is not None else 0.0
    vent = (0.25 + 0.75 * np.sin(np.pi * t)) * (1.0 + 0.5 * age)
    if "Enlarged Ventricles" in md.pathologies:
        vent *= 1.6
    for side in (-1.0, 1.0):
        lab[_ellipse(yy, xx, cy - 0.05 + 0.02 * g[2], side * (0.12 + 0.01 * g[3]),
                     0.22 * vent * scale, 0.07 * vent * scale, angle=side * 0.15)] = Tissue.CSF

    lj = jit.lesion
    for label in md.pathologies:
        if label == "Nonspecific White Matter Lesion":
            for k, (py, px) in enumerate(((-0.3, -0.25), (0.25, -0.3), (0.1, 0.32))):
                lab[_ellipse(yy, xx, cy + py * scale + 0.03 * lj[4 + k % 3, 0],
                             px * scale + 0.03 * lj[4 + k % 3, 1], 0.05, 0.04)] = Tissue.LESION
        elif label == "Edema":
            lab[_ellipse(yy, xx, cy + 0.3 * scale + 0.04 * lj[5, 0], 0.22 * scale,
                         0.2 * scale, 0.16 * scale)] = Tissue.LESION
        elif label == "Mass":
            lab[_ellipse(yy, xx, cy + 0.3 * scale + 0.04 * lj[6, 0], 0.22 * scale + 0.03 * lj[6, 1],
                         0.11 * scale, 0.1 * scale)] = Tissue.MASS
    return lab


def coil_maps(height, width, num_coils, jitter=None):
    """Smooth Gaussian-profile complex coil maps with unit summed power everywhere."""
    jitter = np.zeros(3) if jitter is None else jitter
    yy, xx = _grid(height, width, 1)
    maps = np.empty((num_coils, height, width), dtype=np.complex128)
    for i in range(num_coils):
        theta = 2 * np.pi * i / num_coils + 0.2 * jitter[0]
        cy, cx = 1.3 * np.sin(theta), 1.3 * np.cos(theta)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * (0.9 + 0.05 * jitter[1]) ** 2))
        phase = theta + (0.6 + 0.1 * jitter[2]) * (np.cos(theta) * yy - np.sin(theta) * xx)
        maps[i] = mag * np.exp(1j * phase)
    if num_coils == 1:
        maps[0] = 1.0
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return SensitivityMaps(maps)


def generate_phantom(spec, md):
    """Render the phantom for ``md`` on ``spec.grid`` together with its coil maps.

    Returns
    -------
    Phantom
        Unnormalized complex image, ground-truth maps, a pure-pixel label map and
        the per-class intensity table.
    """
    if md.anatomy is not None and md.anatomy is not spec.anatomy_template:
        raise ConfigError(
            f"metadata anatomy {md.anatomy.value} does not match template "
            f"{spec.anatomy_template.value}"
        )
    height, width = spec.grid
    jit = _Jitter(spec.rng_seed, spec.num_ellipses)
    f = SUPERSAMPLE
    yy, xx = _grid(height, width, f)
    paint = _paint_knee if spec.anatomy_template is Anatomy.KNEE else _paint_brain
    lab = paint(yy, xx, md, jit)

    table = {t: tissue_intensity(t, md) for t in Tissue}
    lut = np.array([table[t] for t in Tissue])
    mag = lut[lab]

    # seed-placed multiplicative texture blobs inside the anatomy
    for cy, cx, ay, ax, amp in jit.texture:
        blob = _ellipse(yy, xx, 0.5 * cy, 0.45 * cx, 0.08 + 0.06 * abs(ay),
                        0.08 + 0.06 * abs(ax))
        mag = np.where(blob, mag * (1.0 + 0.15 * amp), mag)

    p = jit.phase
    phase = 0.3 * p[0] + 0.5 * p[1] * yy + 0.5 * p[2] * xx + 0.3 * p[3] * xx * yy \
        + 0.3 * p[4] * (xx**2 - yy**2)
    img = (mag * np.exp(1j * phase)).reshape(height, f, width, f).mean(axis=(1, 3))

    blocks = lab.reshape(height, f, width, f).transpose(0, 2, 1, 3).reshape(height, width, -1)
    pure = np.all(blocks == blocks[..., :1], axis=-1)
    labels = np.where(pure, blocks[..., 0], -1).astype(np.int16)

    maps = coil_maps(height, width, spec.num_coils, jit.coil)
    return Phantom(img, maps, labels, table)


@dataclass
class PhantomRecord:
    record_id: str
    image: np.ndarray
    metadata: ScanMetadata
    maps: SensitivityMaps
    seed: int
    scale: float = 1.0

    @property
    def prompt(self):
        return to_prompt(self.metadata)


def sample_metadata(rng, anatomy=None, min_pathologies=0, demographics=False):
    """Draw metadata uniformly over the fastMRI knee or brain parameter table."""
    if anatomy is None:
        anatomy = Anatomy.KNEE if rng.random() < 0.5 else Anatomy.BRAIN
    prof = FASTMRI_KNEE if anatomy is Anatomy.KNEE else FASTMRI_BRAIN

    def uni(r):
        return float(round(rng.uniform(r.lo, r.hi)))

    n_path = int(rng.choice(3, p=(0.4, 0.4, 0.2)))
    n_path = max(n_path, min_pathologies)
    labels = rng.choice(len(prof.pathologies), size=n_path, replace=False)
    pathologies = tuple(prof.pathologies[i] for i in sorted(labels))
    kw = {}
    if demographics:
        kw = {"age_years": int(rng.integers(18, 90)), "sex": Sex.M if rng.random() < 0.5 else Sex.F}
    return ScanMetadata(
        anatomy=anatomy,
        slice_index=int(rng.integers(prof.slice_index.lo, prof.slice_index.hi + 1)),
        contrast=prof.contrasts[int(rng.integers(len(prof.contrasts)))],
        pathologies=pathologies,
        sequence=prof.sequences[int(rng.integers(len(prof.sequences)))],
        tr_ms=uni(prof.tr_ms),
        te_ms=uni(prof.te_ms),
        ti_ms=uni(prof.ti_ms),
        flip_angle_deg=uni(prof.flip_angle_deg),
        **kw,
    )


def generate_dataset(n, seed, grid=(64, 64), num_coils=4, num_ellipses=6,
                     min_pathologies=0, demographics=False, quantile=0.99):
    """Generate ``n`` normalized phantoms with metadata and coil maps.

    Images are divided by their ``quantile`` magnitude so that the bulk of the
    real/imaginary values fall in roughly [-1.5, 1.5].
    """
    if n < 1:
        raise ConfigError("dataset size must be at least 1")
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        md = sample_metadata(rng, min_pathologies=min_pathologies, demographics=demographics)
        rec_seed = int(rng.integers(2**31))
        spec = PhantomSpec(tuple(grid), md.anatomy, num_ellipses, rec_seed, num_coils)
        ph = generate_phantom(spec, md)
        img, scale = normalize_quantile(ph.image, quantile)
        records.append(PhantomRecord(f"{seed}-{i:05d}", img, md, ph.maps, rec_seed, scale))
    return records
