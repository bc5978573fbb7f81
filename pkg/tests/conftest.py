import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="session")
def small_records():
    from contextrecon.phantom import generate_dataset

    return generate_dataset(6, 42, grid=(32, 32), num_coils=4)


@pytest.fixture(scope="session")
def tiny_prior():
    """Untrained small network, enough for plumbing checks."""
    import torch

    from contextrecon.prior import ScoreModel, ScoreNet, make_schedule

    torch.manual_seed(0)
    net = ScoreNet(channels=(8, 16), emb_dim=32)
    # make the condition pathway active so conditional and unconditional differ
    torch.nn.init.normal_(net.cond_in.weight, std=0.1)
    return ScoreModel(net, make_schedule())


@pytest.fixture(scope="session")
def desk_prior():
    """The cached reference prior (trained on first use)."""
    from contextrecon.desk import desk_prior as load

    model, history, path = load()
    return model, history, path


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Context-manager factory that times a criterion and records a PASS/FAIL line."""
    import contextlib
    import time

    @contextlib.contextmanager
    def run(number, title, budget_s):
        notes = []
        start = time.perf_counter()
        try:
            yield notes
            elapsed = time.perf_counter() - start
            assert elapsed < budget_s, f"runtime {elapsed:.1f}s exceeds {budget_s}s"
        except BaseException as exc:
            elapsed = time.perf_counter() - start
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            ACCEPTANCE_LINES.append(f"criterion {number} FAIL {title} ({elapsed:.1f}s): {msg}")
            raise
        detail = "; ".join(notes)
        ACCEPTANCE_LINES.append(f"criterion {number} PASS {title} ({elapsed:.1f}s)"
                                + (f": {detail}" if detail else ""))

    return run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
