import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("cdlab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cdlab")

ACCEPTANCE_CRITERIA = 12
_verdicts: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion():
    """Record one acceptance verdict line and fail the test when it is a FAIL."""
    def record(number: int, title: str, failures: list[str], detail: str = "") -> None:
        ok = not failures
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {title}"
        if detail:
            line += f" [{detail}]"
        if failures:
            line += f"; {len(failures)} failing check(s), first: {failures[0]}"
        _verdicts[number] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    failed = [r.nodeid for key in ("failed", "error") for r in terminalreporter.stats.get(key, [])]
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_CRITERIA + 1):
        if n in _verdicts:
            terminalreporter.write_line(_verdicts[n])
        elif any(f"test_criterion_{n:02d}" in nodeid for nodeid in failed):
            terminalreporter.write_line(f"FAIL criterion {n:2d}: raised before reaching a verdict")
        else:
            terminalreporter.write_line(f"NOT RUN criterion {n:2d}")
