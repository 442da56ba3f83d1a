from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def env():
    from guire.envsim import Environment

    return Environment.bundled()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    number, name = props["criterion"]
    status = "PASS" if report.outcome == "passed" else "FAIL"
    _CRITERIA[number] = (name, status, props.get("detail", ""))


@pytest.fixture
def criterion(request, record_property):
    """Tag an acceptance test; call the returned function with a detail string."""
    mark = request.node.get_closest_marker("criterion")
    record_property("criterion", mark.args)

    def detail(text: str) -> None:
        record_property("detail", text)

    return detail


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, status, detail = _CRITERIA[number]
        line = f"criterion {number:2d} {status} {name}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
