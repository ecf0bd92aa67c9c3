import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from llg1d import grid_ops

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# lines reported by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def grid11():
    return grid_ops.make_grid(1.0, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit_field(rng, n, batch=()):
    v = rng.normal(size=batch + (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)
