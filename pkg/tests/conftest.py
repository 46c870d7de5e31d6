import numpy as np
import pytest

from refine import ForestConfig, LearnerSpec, MARRule, SyntheticSpec, simulate


@pytest.fixture(scope="session")
def small():
    """Tanh process, 3 follow-ups, about 20% MAR missingness."""
    ds, oracle = simulate(SyntheticSpec(n=300, d=4, q=2, T=3, seed=1, mar=MARRule(0.2)))
    return ds, oracle


@pytest.fixture
def quick_forest():
    return LearnerSpec(forest=ForestConfig(n_trees=15), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
