import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; returns the verdict."""

    def record(num: int, ok: bool, detail: str) -> bool:
        line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[num] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("-", "acceptance criteria")
        for num in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[num])
