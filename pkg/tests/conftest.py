import numpy as np
import pytest

from condmask.streams import make_stream


@pytest.fixture
def rng():
    return make_stream(12345)


def mc_within(samples, truth, k=4.0):
    """Mean of ``samples`` within k standard errors of ``truth``; returns (ok, mean, se)."""
    s = np.asarray(samples, dtype=float)
    m = s.mean()
    se = s.std(ddof=1) / np.sqrt(s.size)
    return abs(m - truth) <= k * se, m, se


@pytest.fixture(scope="session")
def paper_run_500():
    """Full paper-setup experiment at n = 2000, S = 500 (shared, it takes a few minutes)."""
    from condmask.simlab import ExperimentConfig, run_experiment

    return run_experiment(ExperimentConfig.paper_setup(S=500, n_values=(2000,)))


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
