import numpy as np
import pytest

from causal_rmst.data import Dataset, restrict


@pytest.fixture
def hand_km():
    """Five subjects in one arm (plus a control stub) with times 1, 2+, 3, 4, 5+."""
    time = [1, 2, 3, 4, 5, 1]
    status = [1, 0, 1, 1, 0, 1]
    a = [1, 1, 1, 1, 1, 0]
    X = np.zeros((6, 1))
    return restrict(Dataset.from_arrays(X, a, time, status), 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
