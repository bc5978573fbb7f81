"""Structured scan metadata, its prompt-string form, and a numeric featurizer.

Prompts follow two layouts. The fastMRI layout reads
``"Knee, Slice 19, PDFS, Pathology: ..., TR: 3150, TE: 33, TI: 100, Flip angle: 150"``
with demographics (if any) appended last. When the sequence is qDESS the
SKM-TEA layout is used instead: sequence first, demographics right after the
slice, and ``"Flip Angle"`` capitalized. Any other sequence, when present,
also leads the prompt.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError, PromptParseError, UnknownVocabularyError


class Anatomy(enum.Enum):
    KNEE = "Knee"
    BRAIN = "Brain"


class Contrast(enum.Enum):
    PD = "PD"
    PDFS = "PDFS"
    T1 = "T1"
    T1PRE = "T1PRE"
    T1POST = "T1POST"
    T2 = "T2"
    FLAIR = "FLAIR"


class Sequence(enum.Enum):
    TURBOSPINECHO = "Turbospinecho"
    FLASH = "Flash"
    QDESS = "Qdess"


class Sex(enum.Enum):
    M = "M"
    F = "F"


KNEE_PATHOLOGIES = (
    "Meniscus Tear",
    "Displaced Meniscal Tissue",
    "Bone-Subchondral edema",
    "Cartilage Lesion",
)
BRAIN_PATHOLOGIES = (
    "Nonspecific White Matter Lesion",
    "Mass",
    "Edema",
    "Enlarged Ventricles",
)
#: Multi-hot layout: 8 simulator labels followed by 8 reserved (always zero) slots.
PATHOLOGY_VOCAB = KNEE_PATHOLOGIES + BRAIN_PATHOLOGIES
PATHOLOGY_SLOTS = 16


@dataclass(frozen=True)
class ParamRange:
    lo: float
    hi: float

    def contains(self, v):
        return self.lo <= v <= self.hi

    def normalize(self, v, name=""):
        if self.hi == self.lo:
            return 0.0
        if not self.contains(v):
            warnings.warn(f"{name}={v} outside [{self.lo}, {self.hi}]; clamping", stacklevel=3)
            v = min(max(v, self.lo), self.hi)
        return (v - self.lo) / (self.hi - self.lo)


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    anatomy: Anatomy
    slice_index: ParamRange
    contrasts: tuple
    sequences: tuple
    tr_ms: ParamRange
    te_ms: ParamRange
    ti_ms: ParamRange | None
    flip_angle_deg: ParamRange
    pathologies: tuple


# Parameter ranges per dataset as published for fastMRI knee/brain and SKM-TEA.
FASTMRI_KNEE = DatasetProfile(
    "fastmri_knee", Anatomy.KNEE, ParamRange(0, 30), (Contrast.PD, Contrast.PDFS),
    (Sequence.TURBOSPINECHO,), ParamRange(2000, 3930), ParamRange(24, 35),
    ParamRange(100, 100), ParamRange(122, 150), KNEE_PATHOLOGIES,
)
FASTMRI_BRAIN = DatasetProfile(
    "fastmri_brain", Anatomy.BRAIN, ParamRange(0, 25),
    (Contrast.T1, Contrast.T1PRE, Contrast.T1POST, Contrast.T2, Contrast.FLAIR),
    (Sequence.TURBOSPINECHO, Sequence.FLASH), ParamRange(247, 15810), ParamRange(2, 126),
    ParamRange(100, 2500), ParamRange(69, 180), BRAIN_PATHOLOGIES,
)
SKM_TEA = DatasetProfile(
    "skm_tea", Anatomy.KNEE, ParamRange(0, 159), (Contrast.PD, Contrast.T2),
    (Sequence.QDESS,), ParamRange(18.176, 20.36), ParamRange(5.796, 6.428),
    None, ParamRange(20, 20), KNEE_PATHOLOGIES,
)
PROFILES = {p.name: p for p in (FASTMRI_KNEE, FASTMRI_BRAIN, SKM_TEA)}


@dataclass(frozen=True)
class ScanMetadata:
    """One slice's metadata. Every field is optional; all-``None`` is the empty record."""

    anatomy: Anatomy | None = None
    slice_index: int | None = None
    contrast: Contrast | None = None
    pathologies: tuple = ()
    sequence: Sequence | None = None
    tr_ms: float | None = None
    te_ms: float | None = None
    ti_ms: float | None = None
    flip_angle_deg: float | None = None
    age_years: int | None = None
    sex: Sex | None = None

    def __post_init__(self):
        object.__setattr__(self, "pathologies", tuple(self.pathologies))
        if self.slice_index is not None and self.slice_index < 0:
            raise ConfigError("slice_index must be nonnegative")
        for name in ("tr_ms", "te_ms", "ti_ms"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if self.flip_angle_deg is not None and not 0 < self.flip_angle_deg <= 180:
            raise ConfigError("flip angle must lie in (0, 180]")
        if self.age_years is not None and self.age_years <= 0:
            raise ConfigError("age must be positive")

    @property
    def is_empty(self):
        return self == ScanMetadata()

    def without_mr_params(self):
        return replace(self, tr_ms=None, te_ms=None, ti_ms=None, flip_angle_deg=None)

    def profile(self):
        """Dataset profile whose ranges normalize this record's numeric fields."""
        if self.anatomy is Anatomy.BRAIN:
            return FASTMRI_BRAIN
        if self.sequence is Sequence.QDESS:
            return SKM_TEA
        return FASTMRI_KNEE

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif f.name == "pathologies":
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d):
        kw = dict(d)
        for name, enum_cls in (("anatomy", Anatomy), ("contrast", Contrast),
                               ("sequence", Sequence), ("sex", Sex)):
            if kw.get(name) is not None:
                kw[name] = enum_cls(kw[name])
        kw["pathologies"] = tuple(kw.get("pathologies") or ())
        return cls(**kw)


def validate(md, profile=None):
    """Check ``md`` against the parameter table of its dataset; return a list of problems."""
    profile = profile or md.profile()
    problems = []
    if md.anatomy is not None and md.anatomy is not profile.anatomy:
        problems.append(f"anatomy {md.anatomy.value} not in {profile.name}")
    if md.slice_index is not None and not profile.slice_index.contains(md.slice_index):
        problems.append(f"slice {md.slice_index} out of range")
    if md.contrast is not None and md.contrast not in profile.contrasts:
        problems.append(f"contrast {md.contrast.value} not in {profile.name}")
    if md.sequence is not None and md.sequence not in profile.sequences:
        problems.append(f"sequence {md.sequence.value} not in {profile.name}")
    for name in ("tr_ms", "te_ms", "ti_ms", "flip_angle_deg"):
        v, rng = getattr(md, name), getattr(profile, name)
        if v is None:
            continue
        if rng is None or not rng.contains(v):
            problems.append(f"{name}={v} out of range for {profile.name}")
    return problems


def _fmt_num(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def to_prompt(md):
    """Render metadata as the canonical comma-separated prompt string."""
    skm = md.sequence is Sequence.QDESS
    parts = []
    if md.sequence is not None:
        parts.append(md.sequence.value)
    if md.anatomy is not None:
        parts.append(md.anatomy.value)
    if md.slice_index is not None:
        parts.append(f"Slice {md.slice_index}")
    if md.contrast is not None:
        parts.append(md.contrast.value)
    demo = []
    if md.age_years is not None:
        demo.append(f"Age: {md.age_years}")
    if md.sex is not None:
        demo.append(f"Sex: {md.sex.value}")
    if skm:
        parts += demo
    if md.pathologies:
        parts.append("Pathology: " + ", ".join(md.pathologies))
    if md.tr_ms is not None:
        parts.append(f"TR: {_fmt_num(md.tr_ms)}")
    if md.te_ms is not None:
        parts.append(f"TE: {_fmt_num(md.te_ms)}")
    if md.ti_ms is not None:
        parts.append(f"TI: {_fmt_num(md.ti_ms)}")
    if md.flip_angle_deg is not None:
        key = "Flip Angle" if skm else "Flip angle"
        parts.append(f"{key}: {_fmt_num(md.flip_angle_deg)}")
    if not skm:
        parts += demo
    return ", ".join(parts)


_KEYED = {"TR": "tr_ms", "TE": "te_ms", "TI": "ti_ms", "Flip angle": "flip_angle_deg",
          "Flip Angle": "flip_angle_deg", "Age": "age_years", "Sex": "sex",
          "Pathology": "pathologies"}
_BY_VALUE = {e.value: e for cls in (Anatomy, Contrast, Sequence) for e in cls}


def _parse_number(text, token):
    try:
        v = float(text)
    except ValueError:
        raise PromptParseError("expected a number", token) from None
    if not math.isfinite(v):
        raise PromptParseError("expected a finite number", token)
    return int(v) if v.is_integer() else v


def parse_prompt(s):
    """Inverse of :func:`to_prompt`.

    Raises
    ------
    PromptParseError
        On any token that is not part of the canonical vocabulary.
    """
    kw = {"pathologies": []}
    s = s.strip()
    if not s:
        return ScanMetadata()
    in_pathology = False
    for raw in s.split(","):
        token = raw.strip()
        if not token:
            raise PromptParseError("empty field", raw)
        key, sep, value = token.partition(":")
        if sep and key.strip() in _KEYED:
            in_pathology = False
            name, value = _KEYED[key.strip()], value.strip()
            if name in kw and name != "pathologies":
                raise PromptParseError("duplicate field", token)
            if name == "pathologies":
                if not value:
                    raise PromptParseError("empty pathology list", token)
                kw["pathologies"].append(value)
                in_pathology = True
            elif name == "sex":
                try:
                    kw["sex"] = Sex(value)
                except ValueError:
                    raise PromptParseError("unknown sex", token) from None
            elif name == "age_years":
                age = _parse_number(value, token)
                if not isinstance(age, int):
                    raise PromptParseError("age must be an integer", token)
                kw["age_years"] = age
            else:
                kw[name] = _parse_number(value, token)
            continue
        if in_pathology:
            kw["pathologies"].append(token)
            continue
        if token.startswith("Slice "):
            num = token[len("Slice "):].strip()
            if not num.isdigit():
                raise PromptParseError("slice index must be a nonnegative integer", token)
            if "slice_index" in kw:
                raise PromptParseError("duplicate field", token)
            kw["slice_index"] = int(num)
            continue
        member = _BY_VALUE.get(token)
        if member is None:
            raise PromptParseError("unrecognized token", token)
        name = {Anatomy: "anatomy", Contrast: "contrast", Sequence: "sequence"}[type(member)]
        if name in kw:
            raise PromptParseError("duplicate field", token)
        kw[name] = member
    try:
        return ScanMetadata(**kw)
    except ConfigError as exc:
        raise PromptParseError(str(exc), s) from exc


# Feature layout (offsets into the 64-vector).
FEATURE_DIM = 64
_ANATOMY = 0
_CONTRAST = 2
_SEQUENCE = 9
_SLICE = 12
_PATHOLOGY = 13
_MR_VALUES = 29
_MR_FLAGS = 33
_AGE = 37
_AGE_FLAG = 38
_SEX = 39
_SEX_FLAG = 41
_SLICE_FLAG = 42
_MR_FIELDS = ("tr_ms", "te_ms", "ti_ms", "flip_angle_deg")


class Flag(enum.IntFlag):
    ANATOMY = 1
    SLICE = 2
    CONTRAST = 4
    PATHOLOGY = 8
    SEQUENCE = 16
    TR = 32
    TE = 64
    TI = 128
    FLIP_ANGLE = 256
    AGE = 512
    SEX = 1024


@dataclass(frozen=True, eq=False)
class ConditioningVector:
    values: np.ndarray = field(default_factory=lambda: np.zeros(FEATURE_DIM))
    present_flags: Flag = Flag(0)

    @property
    def is_unconditional(self):
        return self.present_flags == 0 and not np.any(self.values)

    def __eq__(self, other):
        if not isinstance(other, ConditioningVector):
            return NotImplemented
        return self.present_flags == other.present_flags and np.array_equal(
            self.values, other.values)

    __hash__ = None


UNCONDITIONAL = ConditioningVector()


def featurize(md, on_unknown="raise"):
    """Deterministic 64-dim encoding of ``md``; absent groups stay zero.

    Parameters
    ----------
    on_unknown : {"raise", "drop"}
        Behaviour for pathology labels outside :data:`PATHOLOGY_VOCAB`.
    """
    v = np.zeros(FEATURE_DIM)
    flags = Flag(0)
    if md.anatomy is not None:
        v[_ANATOMY + list(Anatomy).index(md.anatomy)] = 1.0
        flags |= Flag.ANATOMY
    if md.contrast is not None:
        v[_CONTRAST + list(Contrast).index(md.contrast)] = 1.0
        flags |= Flag.CONTRAST
    if md.sequence is not None:
        v[_SEQUENCE + list(Sequence).index(md.sequence)] = 1.0
        flags |= Flag.SEQUENCE
    if md.slice_index is not None:
        v[_SLICE] = md.slice_index / 30.0
        v[_SLICE_FLAG] = 1.0
        flags |= Flag.SLICE
    for label in md.pathologies:
        try:
            idx = PATHOLOGY_VOCAB.index(label)
        except ValueError:
            if on_unknown == "drop":
                warnings.warn(f"dropping unknown pathology {label!r}", stacklevel=2)
                continue
            raise UnknownVocabularyError(label) from None
        v[_PATHOLOGY + idx] = 1.0
        flags |= Flag.PATHOLOGY
    profile = md.profile()
    for i, (name, flag) in enumerate(zip(_MR_FIELDS, (Flag.TR, Flag.TE, Flag.TI,
                                                        Flag.FLIP_ANGLE))):
        value = getattr(md, name)
        if value is None:
            continue
        rng = getattr(profile, name) or ParamRange(value, value)
        v[_MR_VALUES + i] = rng.normalize(value, name)
        v[_MR_FLAGS + i] = 1.0
        flags |= flag
    if md.age_years is not None:
        v[_AGE] = md.age_years / 100.0
        v[_AGE_FLAG] = 1.0
        flags |= Flag.AGE
    if md.sex is not None:
        v[_SEX + list(Sex).index(md.sex)] = 1.0
        v[_SEX_FLAG] = 1.0
        flags |= Flag.SEX
    return ConditioningVector(v, flags)


def dropout_for_training(md, rng_seed, p_mrparams=0.5, p_uncond=0.1):
    """Training-time condition dropout.

    Two independent draws per call: with probability ``p_mrparams`` the TR/TE/TI/
    flip-angle group is cleared, and with probability ``p_uncond`` the whole record
    is cleared (the unconditional branch for guidance).
    """
    rng = np.random.default_rng(rng_seed)
    drop_mr, drop_all = rng.random(2) < (p_mrparams, p_uncond)
    if drop_all:
        return ScanMetadata()
    if drop_mr:
        return md.without_mr_params()
    return md


#: Cumulative ablation ladder used by the experiment harness.
def ablate(md, level):
    """Remove information in the order MR params, contrast, slice.

    ``level`` is one of ``"full"``, ``"no_mr_params"``, ``"no_contrast"``,
    ``"no_slice"``, ``"unconditional"``, ``"pathology_only"``.
    """
    if level == "full":
        return md
    if level == "unconditional":
        return ScanMetadata()
    if level == "pathology_only":
        return ScanMetadata(anatomy=md.anatomy, pathologies=md.pathologies)
    out = md.without_mr_params()
    if level == "no_mr_params":
        return out
    out = replace(out, contrast=None)
    if level == "no_contrast":
        return out
    out = replace(out, slice_index=None)
    if level == "no_slice":
        return out
    raise ConfigError(f"unknown ablation level {level!r}")
