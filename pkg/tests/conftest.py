import numpy as np
import pytest

from conflink import graph


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_sbm(rng):
    g = graph.generate_sbm(30, 2, 0.5, 0.1, 2, rng)
    omega = graph.sample_omega(g, 0.8, 0.7, rng)
    return g, graph.observe(g, omega)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: (int(str(k).rstrip("abc")), str(k))):
        terminalreporter.write_line(RESULTS[key])
