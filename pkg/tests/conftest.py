import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- acceptance reporting ----------------------------------------------------
# Tests marked ``acceptance(number, description)`` get one PASS/FAIL line each
# in the terminal summary, whatever the verbosity.

_ACCEPTANCE: dict[tuple[str, str], list[tuple[bool, list]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, description): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    key = tuple(marker.args)
    if report.when == "call" or (report.when == "setup" and report.failed):
        _ACCEPTANCE.setdefault(key, []).append((report.passed, report.user_properties))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (number, text), results in sorted(_ACCEPTANCE.items()):
        status = "PASS" if all(ok for ok, _ in results) else "FAIL"
        measured = "; ".join(f"{k}={v}" for _, props in results for k, v in props)
        line = f"criterion {number}: {status}  {text}"
        terminalreporter.write_line(line + (f"  [{measured}]" if measured else ""))
