import numpy as np
import pytest

from ttsfix.core import TimeScope

GRID_MS = 1e-3


def grid_mask(scope: TimeScope, lo: float = -1.0, hi: float = 12.0) -> np.ndarray:
    """Boolean coverage of [lo, hi) at 1 ms resolution; cell k covers [lo + k ms, lo + (k+1) ms)."""
    n = int(round((hi - lo) / GRID_MS))
    mask = np.zeros(n, dtype=bool)
    for iv in scope:
        a = int(round((iv.start_s - lo) / GRID_MS))
        b = int(round((iv.end_s - lo) / GRID_MS))
        mask[max(a, 0):min(b, n)] = True
    return mask


def grid_length(mask: np.ndarray) -> float:
    return int(mask.sum()) * GRID_MS


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    number, title = marker.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    if call.when == "call" or failed:
        _CRITERIA[number] = (title, "FAIL" if failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict = _CRITERIA[number]
        terminalreporter.write_line(f"{verdict} criterion {number:2d}: {title}")
