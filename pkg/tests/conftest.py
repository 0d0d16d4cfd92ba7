from fractions import Fraction

import pytest

from dihp_lab.corpus import load_named
from dihp_lab.suites import graph_for, spec_for


@pytest.fixture(scope="session")
def maxcut_graph():
    return graph_for(load_named("maxcut_edge"))


@pytest.fixture(scope="session")
def e3lin_graph():
    return graph_for(load_named("e3lin_pair"), order=2)


@pytest.fixture(scope="session")
def minimal_spec():
    # |V| = 2, n = 1, N = 2, alpha n = 1, K = 2
    return spec_for(load_named("maxcut_edge"), 1, Fraction(1), 2)


@pytest.fixture(scope="session")
def maxcut_mu(maxcut_graph):
    return maxcut_graph.mus[0]


@pytest.fixture(scope="session")
def e3lin_mu(e3lin_graph):
    return e3lin_graph.mus[0]


ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
