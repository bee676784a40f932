import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def camera():
    from evdetect.geometry import CameraModel
    return CameraModel(1000.0, 1000.0, 960.0, 600.0, 1920, 1200)


# -- acceptance report ----------------------------------------------------------------

_ACCEPTANCE: dict = {}
N_CRITERIA = 10


@pytest.fixture
def criterion():
    """``report(n, ok, detail)`` records one acceptance line and returns ``ok``."""
    def report(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(_ACCEPTANCE.get(n, f"criterion {n:>2}: FAIL  (not run or errored)"))
