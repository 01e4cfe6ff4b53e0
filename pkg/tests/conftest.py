import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from repsim.fixtures import random_matrix  # noqa: E402

settings.register_profile("repsim", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repsim")

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def mat():
    """Seeded n-by-p Gaussian matrices from the SplitMix64 stream."""
    return random_matrix


@pytest.fixture(scope="session")
def yolo():
    from repsim.topology import yolov3_topology
    return yolov3_topology()


def random_orthogonal(seed, p):
    q, r = np.linalg.qr(random_matrix(seed, p, p))
    return q * np.sign(np.diag(r))


# one PASS/FAIL line per acceptance criterion, printed after the run


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by the test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    if report.when == "call" or not report.passed:
        item.config._criteria[mark.args[0]] = (report.passed, report.duration)


def pytest_terminal_summary(terminalreporter, config):
    if not config._criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, secs) in config._criteria.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  ({secs:.1f} s)")
