import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pbcore.model import Additive, Coverage, make_instance

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# lines printed by the acceptance suite, one per criterion
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def additive3():
    """Three additive voters with unequal sizes; b = 2."""
    w = [[3, 1, 0, 0.5], [0, 2, 1, 0], [1, 0, 0.2, 2]]
    return make_instance([1, 2, 0.5, 1.5], 2.0, [Additive(np.array(r, float)) for r in w])


@pytest.fixture
def cyclic3():
    w = [[2, 1, 0], [0, 2, 1], [1, 0, 2]]
    return make_instance([1, 1, 1], 1.5, [Additive(np.array(r, float)) for r in w])


@pytest.fixture
def coverage5():
    covers = np.array([[1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1], [1, 0, 0, 1], [1, 0, 1, 0]], dtype=bool)
    return make_instance([1, 1, 1, 1, 1], 2.0, [
        Coverage(covers, np.array([1.0, 2.0, 0.5, 1.0])),
        Coverage(covers, np.array([0.0, 1.0, 3.0, 0.5])),
    ])
