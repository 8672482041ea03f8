import numpy as np
import pytest

from reludae.data import Dataset, mog_spec, sample_mog


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def two_mode_data():
    """Two tight modes at +-5 e1 in d=20, 30 samples each."""
    spec = mog_spec(K=2, d=20, cov_scale=0.01)
    return sample_mog(spec, [30, 30], seed=3)


@pytest.fixture
def antipodal_pair():
    X = np.zeros((6, 2))
    X[0, 0], X[0, 1] = 5.0, -5.0
    return Dataset.singletons(X)


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
