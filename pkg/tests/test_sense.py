import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contextrecon.core import SensitivityMaps, fft2c, ifft2c
from contextrecon.errors import ShapeError
from contextrecon.masks import full_mask, make_mask
from contextrecon.phantom import coil_maps
from contextrecon.sense import ForwardModel

from conftest import crandn

MASK_KINDS = [("uniform1d", 2, 0.25), ("poisson2d", 2.5, 0.0)]


def model_for(kind, accel, acs, coils, n, seed=0):
    return ForwardModel(coil_maps(n, n, coils), make_mask(kind, n, n, accel, acs, seed))


def test_zero_image():
    m = model_for("uniform1d", 2, 0.25, 2, 8)
    assert not np.any(m.forward(np.zeros((8, 8))))
    assert not np.any(m.adjoint(np.zeros((2, 8, 8))))


def test_identity_model(rng):
    x = crandn(rng, 8, 8)
    m = ForwardModel.identity(8, 8)
    assert np.array_equal(m.forward(x)[0], fft2c(x))
    assert np.array_equal(m.adjoint(x[None]), ifft2c(x))


@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**31))
def test_forward_linear(a, b, seed):
    r = np.random.default_rng(seed)
    m = model_for("poisson2d", 2.5, 0.0, 3, 16)
    x1, x2 = crandn(r, 16, 16), crandn(r, 16, 16)
    assert np.allclose(m.forward(a * x1 + b * x2), a * m.forward(x1) + b * m.forward(x2),
                       atol=1e-10)


@pytest.mark.parametrize("kind,accel,acs", MASK_KINDS)
@pytest.mark.parametrize("coils", [1, 2, 4])
@pytest.mark.parametrize("n", [8, 64])
def test_dot_product(rng, kind, accel, acs, coils, n):
    m = model_for(kind, accel, acs, coils, n)
    x, y = crandn(rng, n, n), crandn(rng, coils, n, n)
    ax = m.forward(x)
    lhs, rhs = np.vdot(ax, y), np.vdot(x, m.adjoint(y))
    assert abs(lhs - rhs) / (np.linalg.norm(ax) * np.linalg.norm(y)) < 1e-10


@pytest.mark.parametrize("kind,accel,acs", MASK_KINDS)
def test_operator_norm_at_most_one(kind, accel, acs):
    m = model_for(kind, accel, acs, 4, 32, seed=1)
    x = crandn(np.random.default_rng(0), 32, 32)
    for _ in range(200):
        x = m.normal(x)
        x /= np.linalg.norm(x)
    sigma = np.sqrt(np.linalg.norm(m.normal(x)))
    assert sigma <= 1 + 1e-6


def test_measure_noiseless_is_forward(rng):
    m = model_for("uniform1d", 2, 0.25, 2, 16)
    x = crandn(rng, 16, 16)
    assert np.array_equal(m.measure(x, 5), m.forward(x))


def test_noise_statistics():
    m = ForwardModel(SensitivityMaps(np.ones((1, 320, 320))), full_mask(320, 320), 1.0)
    y = m.measure(np.zeros((320, 320)), seed=9)
    assert 0.99 <= y.real.std() <= 1.01
    assert 0.99 <= y.imag.std() <= 1.01


def test_noise_only_on_kept_and_seeded(rng):
    mask = make_mask("poisson2d", 32, 32, 3, seed=0)
    m = ForwardModel(coil_maps(32, 32, 2), mask, 0.5)
    x = crandn(rng, 32, 32)
    y = m.measure(x, 3)
    assert not np.any(y[:, ~mask.kept])
    assert np.array_equal(y, m.measure(x, 3))
    assert not np.array_equal(y, m.measure(x, 4))


def test_shape_errors(rng):
    m = model_for("uniform1d", 2, 0.25, 2, 8)
    with pytest.raises(ShapeError):
        m.forward(np.zeros((8, 9)))
    with pytest.raises(ShapeError):
        m.adjoint(np.zeros((3, 8, 8)))
    with pytest.raises(ShapeError):
        ForwardModel(coil_maps(8, 8, 2), full_mask(9, 9))
