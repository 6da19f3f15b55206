import numpy as np
import pytest

from scourbayes import beam_fem, popgen
from scourbayes.hiermc import default_priors
from scourbayes.surrogate import DEFAULT_DOMAINS, fit_fe


@pytest.fixture(scope="session")
def nrel():
    return beam_fem.nrel5mw()


@pytest.fixture(scope="session")
def nrel_surrogate(nrel):
    return fit_fe(nrel, DEFAULT_DOMAINS["nrel5mw"])


@pytest.fixture(scope="session")
def nrel_priors():
    return default_priors("nrel5mw")


@pytest.fixture(scope="session")
def small_dataset(nrel_surrogate):
    return popgen.generate(popgen.default_truth(), 3, [6, 6, 2], nrel_surrogate, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
