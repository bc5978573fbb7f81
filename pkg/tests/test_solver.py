import numpy as np
import pytest

from contextrecon.core import SensitivityMaps
from contextrecon.errors import ConfigError, ShapeError
from contextrecon.masks import make_mask, make_uniform1d
from contextrecon.metadata import Anatomy, Contrast, ScanMetadata
from contextrecon.phantom import coil_maps
from contextrecon.prior import ddim_sample, make_schedule
from contextrecon.sense import ForwardModel
from contextrecon.solver import (SolverConfig, conjugate_gradient, dds_reconstruct,
                                 prox_data_consistency, prox_objective, residual)

from conftest import crandn

MD = ScanMetadata(anatomy=Anatomy.KNEE, contrast=Contrast.PD, slice_index=3)


def dense_operator(model):
    """Matrix of ``I + xi A^H A`` acting on vectorized complex images, built column-wise."""
    n = model.shape[0] * model.shape[1]
    cols = []
    for i in range(n):
        e = np.zeros(n, complex)
        e[i] = 1
        cols.append(model.normal(e.reshape(model.shape)).ravel())
    return np.stack(cols, axis=1)


def small_system(rng):
    mask = make_uniform1d(8, 2, 0.25, 0)
    model = ForwardModel(coil_maps(8, 8, 2), mask)
    x_true = crandn(rng, 8, 8)
    y = model.forward(x_true) + 0.1 * mask.kept * crandn(rng, 2, 8, 8)
    return model, y, crandn(rng, 8, 8)


def test_prox_identity_closed_form(rng):
    model = ForwardModel.identity(8, 8)
    x_hat, img = crandn(rng, 8, 8), crandn(rng, 8, 8)
    y = model.forward(img)
    out = prox_data_consistency(x_hat, y, model, xi=5.0, cg_steps=1)
    np.testing.assert_allclose(out, (x_hat + 5 * img) / 6, atol=1e-8)


def test_prox_xi_zero_exact(rng):
    model, y, x_hat = small_system(rng)
    assert prox_data_consistency(x_hat, y, model, xi=0.0, cg_steps=5) is x_hat


def test_prox_matches_dense_solve(rng):
    model, y, x_hat = small_system(rng)
    xi = 5.0
    mat = np.eye(64) + xi * dense_operator(model)
    rhs = (x_hat + xi * model.adjoint(y)).ravel()
    direct = np.linalg.solve(mat, rhs).reshape(8, 8)
    out = prox_data_consistency(x_hat, y, model, xi, cg_steps=64)
    assert np.linalg.norm(out - direct) / np.linalg.norm(direct) < 1e-6


def test_prox_objective_monotone(rng):
    model, y, x_hat = small_system(rng)
    _, info = prox_data_consistency(x_hat, y, model, 5.0, 5, return_info=True)
    obj = np.array(info.objective)
    assert len(obj) == 6
    assert np.all(np.diff(obj) <= 1e-12 * obj[0])
    assert not info.breakdown


def test_cg_breakdown_flag():
    # a zero operator has no positive curvature
    info = conjugate_gradient(lambda v: 0 * v, np.ones(4, complex), np.zeros(4, complex), 5)
    assert info.breakdown and info.iterations == 0
    assert np.array_equal(info.x, np.zeros(4))


def test_cg_converged_early_stop():
    info = conjugate_gradient(lambda v: 2 * v, np.ones(3, complex), np.zeros(3, complex), 10)
    np.testing.assert_allclose(info.x, 0.5)
    assert info.iterations == 1


def test_prox_shape_error(rng):
    model, y, _ = small_system(rng)
    with pytest.raises(ShapeError):
        prox_data_consistency(np.zeros((4, 4)), y, model)


@pytest.fixture(scope="module")
def problem():
    r = np.random.default_rng(5)
    mask = make_mask("uniform1d", 16, 16, 4, 0.25, 0)
    model = ForwardModel(coil_maps(16, 16, 2), mask)
    x = crandn(r, 16, 16) * 0.5
    return model, model.forward(x), x


def test_xi_zero_equals_ddim(tiny_prior, problem):
    model, y, _ = problem
    sched = make_schedule()
    cfg = SolverConfig(xi=0.0, gamma=2.0, num_steps=8, seed=11)
    a = dds_reconstruct(y, model, tiny_prior, sched, MD, cfg)
    b = ddim_sample(tiny_prior, sched, MD, 2.0, seed=11, shape=(16, 16), num_steps=8)
    assert np.array_equal(a, b)


def test_gamma_zero_equals_unconditional(tiny_prior, problem):
    model, y, _ = problem
    sched = make_schedule()
    cfg = SolverConfig(gamma=0.0, num_steps=8, seed=2)
    a = dds_reconstruct(y, model, tiny_prior, sched, MD, cfg)
    b = dds_reconstruct(y, model, tiny_prior, sched, ScanMetadata(), cfg)
    c = dds_reconstruct(y, model, tiny_prior, sched, None, SolverConfig(gamma=3.0, num_steps=8,
                                                                        seed=2))
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_guidance_changes_output(tiny_prior, problem):
    model, y, _ = problem
    sched = make_schedule()
    a = dds_reconstruct(y, model, tiny_prior, sched, MD, SolverConfig(gamma=0.0, num_steps=6))
    b = dds_reconstruct(y, model, tiny_prior, sched, MD, SolverConfig(gamma=2.0, num_steps=6))
    assert not np.array_equal(a, b)


def test_eta_zero_deterministic(tiny_prior, problem):
    model, y, _ = problem
    sched = make_schedule()
    cfg = SolverConfig(eta=0.0, num_steps=8, gamma=1.5)
    a = dds_reconstruct(y, model, tiny_prior, sched, MD, cfg)
    assert np.array_equal(a, dds_reconstruct(y, model, tiny_prior, sched, MD, cfg))


def test_trace_rows(tiny_prior, problem, tmp_path):
    model, y, _ = problem
    rows = []
    dds_reconstruct(y, model, tiny_prior, make_schedule(), MD,
                    SolverConfig(num_steps=5), trace=rows)
    assert [r[0] for r in rows] == [1000, 800, 600, 400, 200]
    path = tmp_path / "trace.csv"
    dds_reconstruct(y, model, tiny_prior, make_schedule(), MD,
                    SolverConfig(num_steps=5), trace=path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,residual,x0_norm" and len(lines) == 6


def test_residual_not_worse_than_zero_filled(tiny_prior, problem):
    model, y, _ = problem
    out = dds_reconstruct(y, model, tiny_prior, make_schedule(), MD,
                          SolverConfig(num_steps=10, cg_steps=20))
    assert residual(y, model, out) <= residual(y, model, model.zero_filled(y))


def test_fully_sampled_identity_recovers_truth(tiny_prior, rng):
    model = ForwardModel(SensitivityMaps(np.ones((1, 16, 16))), make_mask("uniform1d", 16, 16, 1))
    x = 0.5 * crandn(rng, 16, 16)
    out = dds_reconstruct(model.forward(x), model, tiny_prior, make_schedule(), None,
                          SolverConfig(num_steps=10, xi=1e6, cg_steps=2))
    assert np.linalg.norm(out - x) / np.linalg.norm(x) < 1e-4


def test_solver_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(xi=-1)
    with pytest.raises(ConfigError):
        SolverConfig(gamma=-0.5)
    with pytest.raises(ConfigError):
        SolverConfig(eta=1.5)
    assert SolverConfig().xi == 5.0 and SolverConfig().cg_steps == 5
    assert SolverConfig().eta == 0.8


def test_kspace_shape_error(tiny_prior, problem):
    model, y, _ = problem
    with pytest.raises(ShapeError):
        dds_reconstruct(y[:1], model, tiny_prior, make_schedule())


def test_objective_helper(rng):
    model, y, x_hat = small_system(rng)
    assert prox_objective(x_hat, x_hat, y, model, 0.0) == 0.0
    assert prox_objective(x_hat, x_hat, y, model, 2.0) > 0
