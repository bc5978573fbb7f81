import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contextrecon.errors import PromptParseError, UnknownVocabularyError
from contextrecon.metadata import (
    BRAIN_PATHOLOGIES, FEATURE_DIM, KNEE_PATHOLOGIES, PATHOLOGY_VOCAB, UNCONDITIONAL,
    Anatomy, Contrast, Flag, ScanMetadata, Sequence, Sex, ablate, dropout_for_training,
    featurize, parse_prompt, to_prompt, validate)
from contextrecon.phantom import sample_metadata

KNEE_EXAMPLE = ScanMetadata(
    anatomy=Anatomy.KNEE, slice_index=19, contrast=Contrast.PDFS,
    pathologies=("Displaced Meniscal Tissue", "Meniscus Tear", "Bone-Subchondral edema"),
    tr_ms=3150, te_ms=33, ti_ms=100, flip_angle_deg=150)
KNEE_STRING = ("Knee, Slice 19, PDFS, Pathology: Displaced Meniscal Tissue, Meniscus Tear, "
               "Bone-Subchondral edema, TR: 3150, TE: 33, TI: 100, Flip angle: 150")
SKM_EXAMPLE = ScanMetadata(
    sequence=Sequence.QDESS, anatomy=Anatomy.KNEE, slice_index=63, age_years=61, sex=Sex.M,
    pathologies=("Cartilage Lesion",), tr_ms=18.352, te_ms=5.876, flip_angle_deg=20)
SKM_STRING = ("Qdess, Knee, Slice 63, Age: 61, Sex: M, Pathology: Cartilage Lesion, "
              "TR: 18.352, TE: 5.876, Flip Angle: 20")


def test_knee_prompt():
    assert to_prompt(KNEE_EXAMPLE) == KNEE_STRING


def test_skm_prompt():
    assert to_prompt(SKM_EXAMPLE) == SKM_STRING


def test_anatomy_only():
    assert to_prompt(ScanMetadata(anatomy=Anatomy.KNEE)) == "Knee"
    assert parse_prompt("Knee") == ScanMetadata(anatomy=Anatomy.KNEE)


@pytest.mark.parametrize("md,s", [(KNEE_EXAMPLE, KNEE_STRING), (SKM_EXAMPLE, SKM_STRING)])
def test_parse_examples(md, s):
    assert parse_prompt(s) == md


@pytest.mark.parametrize("bad", ["Kne, Slice x", "Knee, Slice x", "Knee, TR: abc",
                                 "Knee,, PD", "Knee, Knee", "Knee, Sex: X"])
def test_parse_errors(bad):
    with pytest.raises(PromptParseError) as info:
        parse_prompt(bad)
    assert info.value.token is not None


def test_parse_error_names_token():
    with pytest.raises(PromptParseError) as info:
        parse_prompt("Kne, Slice x")
    assert info.value.token == "Kne"


def test_empty_prompt():
    assert parse_prompt("").is_empty
    assert to_prompt(ScanMetadata()) == ""


def test_roundtrip_generated_corpus():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        md = sample_metadata(rng, min_pathologies=int(rng.integers(0, 2)),
                             demographics=bool(rng.integers(0, 2)))
        assert parse_prompt(to_prompt(md)) == md


reals = st.floats(0.5, 5000, allow_nan=False).map(lambda v: round(v, 3))
metadata_strategy = st.builds(
    ScanMetadata,
    anatomy=st.none() | st.sampled_from(Anatomy),
    slice_index=st.none() | st.integers(0, 200),
    contrast=st.none() | st.sampled_from(Contrast),
    pathologies=st.lists(st.sampled_from(PATHOLOGY_VOCAB), unique=True, max_size=3).map(tuple),
    sequence=st.none() | st.sampled_from(Sequence),
    tr_ms=st.none() | reals, te_ms=st.none() | reals, ti_ms=st.none() | reals,
    flip_angle_deg=st.none() | st.floats(1, 180).map(lambda v: round(v, 2)),
    age_years=st.none() | st.integers(1, 100),
    sex=st.none() | st.sampled_from(Sex),
)


@given(metadata_strategy)
def test_roundtrip_property(md):
    assert parse_prompt(to_prompt(md)) == md


def test_featurize_empty_is_zero():
    v = featurize(ScanMetadata())
    assert v.values.shape == (FEATURE_DIM,)
    assert not np.any(v.values)
    assert v.present_flags == Flag(0)
    assert v == UNCONDITIONAL and v.is_unconditional


def test_featurize_tr_range_endpoints():
    lo = featurize(ScanMetadata(anatomy=Anatomy.KNEE, tr_ms=2000)).values
    hi = featurize(ScanMetadata(anatomy=Anatomy.KNEE, tr_ms=3930)).values
    i = 29  # TR value slot
    assert lo[i] == 0.0 and hi[i] == 1.0
    assert lo[33] == hi[33] == 1.0  # TR presence flag


def test_featurize_te_only_difference():
    a = featurize(KNEE_EXAMPLE).values
    b = featurize(ScanMetadata(**{**KNEE_EXAMPLE.__dict__, "te_ms": 27})).values
    diff = np.flatnonzero(a != b)
    assert diff.tolist() == [30]


def test_featurize_injective_on_discrete_fields():
    seen = set()
    for a, c, s in itertools.product(Anatomy, Contrast, Sequence):
        v = featurize(ScanMetadata(anatomy=a, contrast=c, sequence=s)).values
        seen.add(v.tobytes())
    assert len(seen) == len(Anatomy) * len(Contrast) * len(Sequence)


@given(metadata_strategy)
def test_featurize_zero_only_when_empty(md):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v = featurize(md)
    assert v.values.shape == (FEATURE_DIM,)
    # the all-zeros vector is reserved for the empty record
    assert np.any(v.values) != md.is_empty
    if not md.is_empty:
        assert v.present_flags != 0


def test_featurize_unknown_pathology():
    md = ScanMetadata(anatomy=Anatomy.KNEE, pathologies=("Sprain",))
    with pytest.raises(UnknownVocabularyError):
        featurize(md)
    with pytest.warns(UserWarning):
        v = featurize(md, on_unknown="drop")
    assert v == featurize(ScanMetadata(anatomy=Anatomy.KNEE))


def test_featurize_clamps_out_of_range():
    with pytest.warns(UserWarning):
        v = featurize(ScanMetadata(anatomy=Anatomy.KNEE, tr_ms=9000)).values
    assert v[29] == 1.0


def test_dropout_frequencies():
    md = KNEE_EXAMPLE
    mr = full = 0
    for seed in range(10_000):
        out = dropout_for_training(md, seed)
        if out.is_empty:
            full += 1
        elif out.tr_ms is None:
            mr += 1
            assert out == md.without_mr_params()
        else:
            assert out == md
        assert out.is_empty or out.anatomy is Anatomy.KNEE
    assert abs(full / 10_000 - 0.1) <= 0.01
    # the MR group is cleared whenever it is dropped; count among non-cleared draws
    assert abs(mr / (10_000 - full) - 0.5) <= 0.02


def test_dropout_deterministic():
    assert dropout_for_training(KNEE_EXAMPLE, 7) == dropout_for_training(KNEE_EXAMPLE, 7)


def test_ablation_ladder():
    assert ablate(KNEE_EXAMPLE, "full") == KNEE_EXAMPLE
    nomr = ablate(KNEE_EXAMPLE, "no_mr_params")
    assert nomr.tr_ms is None and nomr.contrast is Contrast.PDFS
    noc = ablate(KNEE_EXAMPLE, "no_contrast")
    assert noc.contrast is None and noc.slice_index == 19
    nos = ablate(KNEE_EXAMPLE, "no_slice")
    assert nos.slice_index is None and nos.pathologies == KNEE_EXAMPLE.pathologies
    assert ablate(KNEE_EXAMPLE, "unconditional").is_empty
    po = ablate(KNEE_EXAMPLE, "pathology_only")
    assert po == ScanMetadata(anatomy=Anatomy.KNEE, pathologies=KNEE_EXAMPLE.pathologies)


def test_validate_ranges():
    assert validate(KNEE_EXAMPLE) == []
    bad = ScanMetadata(anatomy=Anatomy.KNEE, slice_index=40, tr_ms=1000)
    assert len(validate(bad)) == 2


def test_vocabulary_layout():
    assert len(KNEE_PATHOLOGIES) == len(BRAIN_PATHOLOGIES) == 4
    assert PATHOLOGY_VOCAB == KNEE_PATHOLOGIES + BRAIN_PATHOLOGIES


def test_dict_roundtrip():
    assert ScanMetadata.from_dict(SKM_EXAMPLE.to_dict()) == SKM_EXAMPLE
