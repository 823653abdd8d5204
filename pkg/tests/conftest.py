import numpy as np
import pytest
from hypothesis import strategies as st

from oodbounds.dist import FiniteDist


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def simplex(k_min: int = 2, k_max: int = 6, floor: float = 0.0):
    """Hypothesis strategy for probability vectors, optionally bounded away from zero."""

    def build(raw):
        w = np.asarray(raw, dtype=float) + floor
        return w / w.sum()

    return st.integers(k_min, k_max).flatmap(
        lambda k: st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k).map(build)
    )


def pair_on(k: int, floor: float = 0.0):
    vec = st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)
    return st.tuples(vec, vec).map(
        lambda ab: tuple(FiniteDist(range(k), (np.array(v) + floor) / (np.sum(v) + k * floor)) for v in ab)
    )


def dist_pairs(k_min: int = 2, k_max: int = 6, floor: float = 0.0):
    return st.integers(k_min, k_max).flatmap(lambda k: pair_on(k, floor))


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
