import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gluebench.grid import Annulus, build_domain

settings.register_profile(
    "gluebench",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("gluebench")


@pytest.fixture
def annulus2d():
    return build_domain(Annulus(1.0, 3.0), 0.1, ((-3.2, -3.2), (3.2, 3.2)))


@pytest.fixture
def annulus2d_coarse():
    return build_domain(Annulus(1.0, 3.0), 0.2, ((-3.2, -3.2), (3.2, 3.2)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
