"""Cartesian undersampling masks: equispaced 1D lines and variable-density Poisson disc."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigError, InfeasibleDensityError, ShapeError


class MaskKind(enum.IntEnum):
    UNIFORM1D = 0
    POISSON2D = 1

    @property
    def label(self):
        return {MaskKind.UNIFORM1D: "uniform1d", MaskKind.POISSON2D: "poisson2d"}[self]

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "")
        for kind in cls:
            if kind.label == key:
                return kind
        raise ConfigError(f"unknown mask kind {value!r}")


#: Radius growth per unit of normalized k-space distance for Poisson2D.
POISSON_SLOPE = 2.0
#: Candidate budget per active point in the dart-throwing loop.
POISSON_CANDIDATES = 30
#: Calibration radius in pixels on a 320 x 320 grid; scaled with the grid.
POISSON_CAL_RADIUS_320 = 8.0
POISSON_TOLERANCE = 0.15


@dataclass(frozen=True, eq=False)
class SamplingMask:
    kept: np.ndarray
    kind: MaskKind
    accel_nominal: float
    acs_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        kept = np.ascontiguousarray(self.kept, dtype=bool)
        if kept.ndim != 2:
            raise ShapeError(f"mask must be 2D, got shape {kept.shape}")
        kept.setflags(write=False)
        object.__setattr__(self, "kept", kept)
        object.__setattr__(self, "kind", MaskKind.parse(self.kind))

    @property
    def shape(self):
        return self.kept.shape

    @property
    def acceleration(self):
        """Achieved acceleration ``H * W / count(kept)``."""
        n = int(self.kept.sum())
        return math.inf if n == 0 else self.kept.size / n

    def __eq__(self, other):
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.accel_nominal == other.accel_nominal
            and self.acs_fraction == other.acs_fraction
            and self.seed == other.seed
            and np.array_equal(self.kept, other.kept)
        )

    __hash__ = None


def full_mask(height, width):
    return SamplingMask(np.ones((height, width), bool), MaskKind.UNIFORM1D, 1.0, 0.0, 0)


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def acs_width(width, acs_fraction):
    return _round_half_up(acs_fraction * width)


def make_uniform1d(width, accel, acs_fraction, seed, height=None):
    """fastMRI-style equispaced column mask with a centered autocalibration band.

    The ACS band holds ``round_half_up(acs_fraction * width)`` contiguous columns
    around ``width // 2``. Outside it, every ``accel``-th column is kept, starting
    at column ``seed % accel``. All rows share the same column pattern.
    """
    accel = int(accel)
    if accel < 1:
        raise ConfigError(f"acceleration must be >= 1, got {accel}")
    if not 0.0 <= acs_fraction < 1.0:
        raise ConfigError(f"acs_fraction must lie in [0, 1), got {acs_fraction}")
    n_acs = acs_width(width, acs_fraction)
    if n_acs >= width:
        raise ConfigError(f"ACS band of {n_acs} columns does not fit in width {width}")
    height = width if height is None else int(height)

    cols = np.zeros(width, dtype=bool)
    start = width // 2 - n_acs // 2
    cols[start:start + n_acs] = True
    offset = int(seed) % accel
    cols[offset::accel] = True
    kept = np.broadcast_to(cols, (height, width)).copy()
    return SamplingMask(kept, MaskKind.UNIFORM1D, float(accel), float(acs_fraction), int(seed))


def _normalized_radius(height, width):
    yy, xx = np.meshgrid(
        (np.arange(height) - height // 2) / (height / 2),
        (np.arange(width) - width // 2) / (width / 2),
        indexing="ij",
    )
    return np.sqrt(yy**2 + xx**2)


def poisson_radius(height, width, scale, slope=POISSON_SLOPE):
    """Local exclusion radius (pixels) at every grid point."""
    return scale * (1.0 + slope * _normalized_radius(height, width))


def calibration_disk(height, width):
    r_cal = POISSON_CAL_RADIUS_320 * min(height, width) / 320.0
    yy, xx = np.meshgrid(
        np.arange(height) - height // 2, np.arange(width) - width // 2, indexing="ij"
    )
    return yy**2 + xx**2 <= r_cal**2


@numba.njit(cache=True)
def _radius_at(y, x, cy, cx, hy, hx, scale, slope):
    dy = (y - cy) / hy
    dx = (x - cx) / hx
    return scale * (1.0 + slope * math.sqrt(dy * dy + dx * dx))


@numba.njit(cache=True)
def _dart_throw(height, width, scale, slope, seed, budget):
    np.random.seed(seed)
    kept = np.zeros((height, width), dtype=np.bool_)
    act_y = np.empty(height * width, dtype=np.int64)
    act_x = np.empty(height * width, dtype=np.int64)
    cy = height // 2
    cx = width // 2
    hy = height / 2.0
    hx = width / 2.0
    # slack on the neighbour window: the radius at a midpoint can exceed the
    # radius at the candidate by at most this factor
    grow = 1.0 / max(1e-3, 1.0 - scale * slope / (2.0 * min(hy, hx)))

    y0 = np.random.randint(0, height)
    x0 = np.random.randint(0, width)
    kept[y0, x0] = True
    act_y[0] = y0
    act_x[0] = x0
    n_active = 1
    while n_active > 0:
        i = np.random.randint(0, n_active)
        py = act_y[i]
        px = act_x[i]
        rp = _radius_at(py, px, cy, cx, hy, hx, scale, slope)
        found = False
        for _ in range(budget):
            rho = rp * (1.0 + np.random.random())
            theta = 2.0 * math.pi * np.random.random()
            qy = int(math.floor(py + rho * math.sin(theta) + 0.5))
            qx = int(math.floor(px + rho * math.cos(theta) + 0.5))
            if qy < 0 or qy >= height or qx < 0 or qx >= width or kept[qy, qx]:
                continue
            rq = _radius_at(qy, qx, cy, cx, hy, hx, scale, slope)
            win = int(math.ceil(rq * grow)) + 1
            ok = True
            for ny in range(max(0, qy - win), min(height, qy + win + 1)):
                if not ok:
                    break
                for nx in range(max(0, qx - win), min(width, qx + win + 1)):
                    if kept[ny, nx]:
                        dist = math.sqrt((ny - qy) ** 2 + (nx - qx) ** 2)
                        rmid = _radius_at(0.5 * (ny + qy), 0.5 * (nx + qx),
                                          cy, cx, hy, hx, scale, slope)
                        if dist < rmid:
                            ok = False
                            break
            if ok:
                kept[qy, qx] = True
                act_y[n_active] = qy
                act_x[n_active] = qx
                n_active += 1
                found = True
                break
        if not found:
            n_active -= 1
            act_y[i] = act_y[n_active]
            act_x[i] = act_x[n_active]
    return kept


def _poisson_pattern(height, width, scale, seed):
    darts = _dart_throw(height, width, float(scale), POISSON_SLOPE,
                        int(seed) % (2**32), POISSON_CANDIDATES)
    return darts | calibration_disk(height, width)


def make_poisson2d(height, width, accel, seed, *, max_iter=40):
    """Variable-density Poisson-disc mask with a fully sampled central disk.

    The exclusion radius grows linearly with normalized distance from the
    k-space center; its overall scale is found by bisection so that the achieved
    acceleration lands within 15% of ``accel``.
    """
    if accel <= 1:
        raise ConfigError(f"Poisson2D acceleration must exceed 1, got {accel}")
    target = height * width / float(accel)
    if calibration_disk(height, width).sum() >= target:
        raise InfeasibleDensityError(
            f"acceleration {accel} leaves no room beyond the calibration region"
        )

    def count(scale):
        pattern = _poisson_pattern(height, width, scale, seed)
        return pattern, int(pattern.sum())

    lo, hi = 0.25, 1.0
    pattern, n = count(hi)
    while n > target:
        lo, hi = hi, hi * 2.0
        if hi > max(height, width):
            raise InfeasibleDensityError(f"cannot reach acceleration {accel}")
        pattern, n = count(hi)
    best, best_err = pattern, abs(n / target - 1.0)
    for _ in range(max_iter):
        if best_err < 0.01:
            break
        mid = 0.5 * (lo + hi)
        pattern, n = count(mid)
        err = abs(n / target - 1.0)
        if err < best_err:
            best, best_err = pattern, err
        if n > target:
            lo = mid
        else:
            hi = mid
    mask = SamplingMask(best, MaskKind.POISSON2D, float(accel), 0.0, int(seed))
    if abs(mask.acceleration / accel - 1.0) > POISSON_TOLERANCE:
        raise InfeasibleDensityError(
            f"achieved acceleration {mask.acceleration:.2f} too far from {accel}"
        )
    return mask


def make_mask(kind, height, width, accel, acs_fraction=0.0, seed=0):
    """Dispatch on ``kind`` (``"uniform1d"`` or ``"poisson2d"``)."""
    kind = MaskKind.parse(kind)
    if kind is MaskKind.UNIFORM1D:
        return make_uniform1d(width, int(accel), acs_fraction, seed, height=height)
    return make_poisson2d(height, width, accel, seed)


def apply_mask(ksp, mask):
    """Zero every k-space entry the mask does not keep; kept entries pass unchanged."""
    kept = mask.kept if isinstance(mask, SamplingMask) else np.asarray(mask, bool)
    ksp = np.asarray(ksp)
    if ksp.shape[-2:] != kept.shape:
        raise ShapeError(f"k-space grid {ksp.shape[-2:]} does not match mask {kept.shape}")
    return np.where(kept, ksp, np.zeros((), dtype=ksp.dtype))


def acs_region(kept):
    """Largest fully sampled rectangle centred on the k-space DC bin.

    Returns ``(row_slice, col_slice)`` or ``None`` when the DC bin itself is not
    sampled. Blocks are placed as ``[c - n // 2, c - n // 2 + n)`` along each axis.
    """
    kept = np.asarray(kept, bool)
    h, w = kept.shape
    cy, cx = h // 2, w // 2
    if not kept[cy, cx]:
        return None
    integral = np.zeros((h + 1, w + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(kept, axis=0), axis=1)

    def full(nh, nw):
        y0, x0 = cy - nh // 2, cx - nw // 2
        y1, x1 = y0 + nh, x0 + nw
        if y0 < 0 or x0 < 0 or y1 > h or x1 > w:
            return False
        s = integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]
        return s == nh * nw

    best = (0, 1, 1)
    nw = w
    for nh in range(1, h + 1):
        while nw > 0 and not full(nh, nw):
            nw -= 1
        if nw == 0:
            break
        if nh * nw > best[0]:
            best = (nh * nw, nh, nw)
    _, nh, nw = best
    return slice(cy - nh // 2, cy - nh // 2 + nh), slice(cx - nw // 2, cx - nw // 2 + nw)
