import numpy as np
import pytest

from contextrecon.core import SensitivityMaps, mvue
from contextrecon.errors import CalibrationError, ConfigError
from contextrecon.espirit import (CalibrationConfig, _gauge_fix, build_calibration_matrix,
                                  estimate_maps)
from contextrecon.masks import full_mask, make_mask, make_uniform1d
from contextrecon.phantom import generate_dataset
from contextrecon.sense import ForwardModel

from conftest import crandn


@pytest.fixture(scope="module")
def phantom():
    return generate_dataset(1, 3, grid=(64, 64), num_coils=4)[0]


@pytest.fixture(scope="module")
def full_ksp(phantom):
    return ForwardModel(phantom.maps, full_mask(64, 64)).forward(phantom.image)


def object_support(rec):
    return np.abs(rec.image) > 0.1 * np.abs(rec.image).max()


def test_calibration_matrix_shape(rng):
    acs = crandn(rng, 4, 26, 26)
    assert build_calibration_matrix(acs, 6).shape == (441, 144)
    assert build_calibration_matrix(acs[:, :6, :6], 6).shape == (1, 144)


def test_calibration_matrix_index_map(rng):
    acs = crandn(rng, 3, 9, 11)
    k = 4
    mat = build_calibration_matrix(acs, k)
    ncol = 11 - k + 1
    for _ in range(50):
        i, j = rng.integers(0, 9 - k + 1), rng.integers(0, ncol)
        c, dy, dx = rng.integers(0, 3), rng.integers(0, k), rng.integers(0, k)
        assert mat[i * ncol + j, c * k * k + dy * k + dx] == acs[c, i + dy, j + dx]


def test_calibration_matrix_too_small(rng):
    with pytest.raises(ConfigError):
        build_calibration_matrix(crandn(rng, 2, 5, 8), 6)


def test_single_unit_coil(rng):
    from contextrecon.core import fft2c

    rec = generate_dataset(1, 5, grid=(48, 48), num_coils=1)[0]
    y = fft2c(rec.image)[None]
    est = estimate_maps(y, mask=make_uniform1d(48, 1, 0.0, 0))
    sup = est.power() > 0
    assert sup[object_support(rec)].mean() > 0.9
    np.testing.assert_allclose(np.abs(est.maps[0][sup]), 1.0, atol=2e-2)


def test_normalization_on_support(full_ksp):
    est = estimate_maps(full_ksp, mask=make_mask("uniform1d", 64, 64, 4, 0.25))
    p = est.power()
    on = p > 0
    assert np.max(np.abs(p[on] - 1.0)) <= 1e-6
    assert np.all(np.isfinite(est.maps))
    assert np.all((est.eigenvalue_map >= 0) & (est.eigenvalue_map <= 1))


def test_magnitude_correlation_vs_truth(phantom, full_ksp):
    est = estimate_maps(full_ksp, mask=make_mask("uniform1d", 64, 64, 4, 0.25))
    sup = object_support(phantom) & (est.power() > 0)
    truth = _gauge_fix(phantom.maps.maps)
    for c in range(4):
        r = np.corrcoef(np.abs(est.maps[c][sup]), np.abs(truth[c][sup]))[0, 1]
        assert r > 0.99


def test_gauge_fixed_first_coil(full_ksp):
    est = estimate_maps(full_ksp, mask=make_mask("uniform1d", 64, 64, 4, 0.25))
    assert np.all(est.maps[0].imag == 0)
    assert np.all(est.maps[0].real >= 0)


@pytest.mark.parametrize("theta", [0.7, 2.9, -1.3])
def test_global_phase_invariance(full_ksp, theta):
    mask = make_mask("uniform1d", 64, 64, 4, 0.25)
    a = estimate_maps(full_ksp, mask=mask)
    b = estimate_maps(np.exp(1j * theta) * full_ksp, mask=mask)
    np.testing.assert_allclose(b.maps, a.maps, atol=1e-10)


def test_mvue_consistency_with_truth(phantom, full_ksp):
    est = estimate_maps(full_ksp, mask=make_mask("uniform1d", 64, 64, 4, 0.25))
    ref = mvue(full_ksp, SensitivityMaps(_gauge_fix(phantom.maps.maps)))
    out = mvue(full_ksp, est)
    sup = object_support(phantom)
    assert np.linalg.norm((out - ref)[sup]) / np.linalg.norm(ref[sup]) < 2e-2


def test_works_from_undersampled_acs(phantom):
    mask = make_uniform1d(64, 4, 0.2, 1)
    y = ForwardModel(phantom.maps, mask).forward(phantom.image)
    est = estimate_maps(y, CalibrationConfig(kernel_size=5))
    sup = object_support(phantom) & (est.power() > 0)
    truth = _gauge_fix(phantom.maps.maps)
    r = np.corrcoef(np.abs(est.maps[:, sup]).ravel(), np.abs(truth[:, sup]).ravel())[0, 1]
    assert r > 0.98


def test_no_acs(rng):
    y = crandn(rng, 2, 16, 16)
    y[:, 8, 8] = 0
    with pytest.raises(CalibrationError):
        estimate_maps(y)


def test_kernel_larger_than_acs(full_ksp):
    with pytest.raises(CalibrationError):
        estimate_maps(full_ksp, CalibrationConfig(kernel_size=6),
                      mask=make_uniform1d(64, 4, 0.05, 1))


def test_config_validation():
    with pytest.raises(ConfigError):
        CalibrationConfig(kernel_size=0)
    with pytest.raises(ConfigError):
        CalibrationConfig(eig_crop=1.5)
