import warnings
from pathlib import Path

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

CORA = Path(__file__).resolve().parent.parent / "data" / "cora"


@pytest.fixture(scope="session")
def cora_paths():
    return {
        "edges": CORA / "cora.edges",
        "attrs": CORA / "cora.attrs",
        "labels": CORA / "cora.labels",
    }


@pytest.fixture
def write(tmp_path):
    """Write text to a fresh file under tmp_path and return its path."""
    counter = iter(range(10**6))

    def _write(text, name=None):
        path = tmp_path / (name or f"f{next(counter)}.txt")
        path.write_text(text, encoding="utf-8")
        return path

    return _write


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


_ACCEPTANCE: dict[int, tuple[str, list, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker.args
    details = [v for k, v in item.user_properties if k == "detail"]
    status = "PASS" if report.passed else "FAIL"
    prev = _ACCEPTANCE.get(number)
    if prev is not None and prev[2] == "FAIL":
        status = "FAIL"
    _ACCEPTANCE[number] = (title, (prev[1] if prev else []) + details, status)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, details, status = _ACCEPTANCE[number]
        line = f"criterion {number:>2} {status}: {title}"
        if details:
            line += " | " + "; ".join(details)
        terminalreporter.write_line(line)
