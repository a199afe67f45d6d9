from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from fmingraph.manifold import build_model

settings.register_profile("fmingraph", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fmingraph")


@pytest.fixture(scope="session")
def euclid():
    return build_model("euclidean", 2)


@pytest.fixture(scope="session")
def power():
    return build_model("power(2,0.5)", 2)


@pytest.fixture(scope="session")
def hyper():
    return build_model("hyperbolic(1)", 2)


@pytest.fixture(scope="session")
def expm():
    return build_model("exp(1,0.5)", 2)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
