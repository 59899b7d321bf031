import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lloglog.dyadic import DyadicCube, GridFunction

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def grid(values, root_level=0, d=None, nonnegative=False):
    """GridFunction on the dyadic root of the given level at the origin; resolution from the shape."""
    v = np.asarray(values, dtype=np.float64)
    d = v.ndim if d is None else d
    side = v.shape[0]
    res = root_level + int(np.log2(side))
    return GridFunction(DyadicCube(root_level, (0,) * d), res, v, nonnegative=nonnegative)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
