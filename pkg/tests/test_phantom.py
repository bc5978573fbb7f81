import dataclasses

import numpy as np
import pytest

from contextrecon.errors import ConfigError
from contextrecon.metadata import (Anatomy, Contrast, ScanMetadata, Sequence, Sex,
                                   parse_prompt)
from contextrecon.phantom import (RELAXOMETRY, T2_SCALE, PhantomSpec, Tissue,
                                  generate_dataset, generate_phantom, tissue_intensity)

KNEE = ScanMetadata(anatomy=Anatomy.KNEE, slice_index=12, contrast=Contrast.PD,
                    sequence=Sequence.TURBOSPINECHO, tr_ms=3000, te_ms=30, ti_ms=100,
                    flip_angle_deg=140)
BRAIN = ScanMetadata(anatomy=Anatomy.BRAIN, slice_index=10, contrast=Contrast.T2,
                     sequence=Sequence.TURBOSPINECHO, tr_ms=5000, te_ms=90,
                     flip_angle_deg=90)


def spec(anatomy=Anatomy.KNEE, seed=4):
    return PhantomSpec((64, 64), anatomy, 6, seed, 4)


def test_deterministic():
    a = generate_phantom(spec(), KNEE)
    b = generate_phantom(spec(), KNEE)
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.maps.maps, b.maps.maps)
    assert not np.array_equal(a.image, generate_phantom(spec(seed=5), KNEE).image)


def test_fat_suppression():
    pd = generate_phantom(spec(), KNEE)
    fs = generate_phantom(spec(), dataclasses.replace(KNEE, contrast=Contrast.PDFS))
    fat = pd.labels == Tissue.FAT
    assert fat.sum() > 20
    assert np.all(np.abs(fs.image[fat]) == 0)
    assert np.all(np.abs(pd.image[fat]) > 0)


def test_te_ratio_closed_form():
    md2 = dataclasses.replace(KNEE, te_ms=2 * KNEE.te_ms)
    a = generate_phantom(spec(), KNEE)
    b = generate_phantom(spec(), md2)
    for t in Tissue:
        if RELAXOMETRY[t][0] == 0:
            continue
        t2 = RELAXOMETRY[t][2] * T2_SCALE[KNEE.sequence]
        ratio = np.exp(-KNEE.te_ms / t2)
        assert b.intensities[t] == pytest.approx(a.intensities[t] * ratio, rel=1e-9)
        pure = a.labels == t
        if pure.any():
            np.testing.assert_allclose(b.image[pure], a.image[pure] * ratio, rtol=1e-9)


def test_signal_model_at_90_degrees():
    md = ScanMetadata(anatomy=Anatomy.KNEE, tr_ms=2000, te_ms=30, flip_angle_deg=90)
    rho, t1, t2 = RELAXOMETRY[Tissue.MUSCLE]
    expected = rho * (1 - np.exp(-2000 / t1)) * np.exp(-30 / t2)
    assert tissue_intensity(Tissue.MUSCLE, md) == pytest.approx(expected, rel=1e-12)


def test_contrast_change_confined_to_affected_classes():
    a = generate_phantom(spec(), KNEE)
    b = generate_phantom(spec(), dataclasses.replace(KNEE, contrast=Contrast.PDFS))
    assert np.array_equal(a.labels, b.labels)
    affected = {t for t in Tissue if a.intensities[t] != b.intensities[t]}
    changed = np.abs(a.image - b.image) > 0
    ok = np.isin(a.labels, [int(t) for t in affected]) | (a.labels == -1)
    assert changed.any()
    assert not np.any(changed & ~ok)


def test_pathology_change_confined_to_lesion():
    a = generate_phantom(spec(), KNEE)
    b = generate_phantom(spec(), dataclasses.replace(KNEE, pathologies=("Bone-Subchondral edema",)))
    changed = np.abs(a.image - b.image) > 0
    relabelled = a.labels != b.labels
    assert changed.any()
    # differences sit on pixels whose tissue changed or that straddle a boundary
    assert not np.any(changed & ~(relabelled | (a.labels == -1) | (b.labels == -1)))
    assert np.any(b.labels == Tissue.LESION)


@pytest.mark.parametrize("label", ["Nonspecific White Matter Lesion", "Mass", "Edema",
                                   "Enlarged Ventricles"])
def test_brain_pathologies_alter_image(label):
    a = generate_phantom(spec(Anatomy.BRAIN), BRAIN)
    b = generate_phantom(spec(Anatomy.BRAIN), dataclasses.replace(BRAIN, pathologies=(label,)))
    assert not np.array_equal(a.image, b.image)


def test_slice_age_sex_alter_geometry():
    base = generate_phantom(spec(), KNEE)
    for change in ({"slice_index": 25}, {"age_years": 80}, {"sex": Sex.F}):
        other = generate_phantom(spec(), dataclasses.replace(KNEE, **change))
        assert not np.array_equal(base.labels, other.labels), change


def test_anatomy_mismatch():
    with pytest.raises(ConfigError):
        generate_phantom(spec(Anatomy.BRAIN), KNEE)


def test_maps_normalized():
    ph = generate_phantom(spec(), KNEE)
    np.testing.assert_allclose(ph.maps.power(), 1.0, atol=1e-12)


def test_dataset_records():
    recs = generate_dataset(100, 0, grid=(32, 32))
    assert len(recs) == 100
    for r in recs:
        assert parse_prompt(r.prompt) == r.metadata
        if r.metadata.anatomy is Anatomy.KNEE:
            assert 2000 <= r.metadata.tr_ms <= 3930
        chans = np.stack([r.image.real, r.image.imag])
        assert np.all(np.abs(chans) <= 3)
        assert np.mean(np.abs(r.image) <= 1 + 1e-12) >= 0.99
    ids = [r.record_id for r in recs]
    assert len(set(ids)) == 100
    anatomies = {r.metadata.anatomy for r in recs}
    assert anatomies == {Anatomy.KNEE, Anatomy.BRAIN}


def test_dataset_min_pathologies():
    recs = generate_dataset(20, 3, grid=(32, 32), min_pathologies=1)
    assert all(r.metadata.pathologies for r in recs)
