import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from switchsim.model import ScheduleSet

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def unit_atoms(n: int) -> list[list[int]]:
    return [[0] * n] + [[int(i == j) for j in range(n)] for i in range(n)]


def scaled_simplex(n: int, c: int = 1) -> ScheduleSet:
    return ScheduleSet(tuple(f"l{i}" for i in range(n)), np.array(unit_atoms(n)) * c)


def two_link_raw(rate: float = 0.3) -> dict:
    return {
        "nodes": ["a", "b", "c"],
        "links": [{"id": "ab", "tail": "a", "head": "b"}, {"id": "bc", "tail": "b", "head": "c"}],
        "schedules": [[0, 0], [1, 0], [0, 1]],
        "routes": [{"id": "r", "links": ["ab", "bc"], "rate": rate}],
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240519)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
