from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridforest.network import load_network  # noqa: E402

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "gridforest" / "fixtures"
FIXTURE_NAMES = ("two_bus", "triangle", "diamond", "tiny6", "ws30")

_acceptance: dict[str, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


def fixture_network(name: str):
    return load_network(FIXTURES / f"{name}.json")


@pytest.fixture
def criterion(request):
    """Attach a one-line summary to an acceptance test."""

    def record(text: str) -> None:
        request.node.user_properties.append(("criterion", text))

    return record


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    detail = next((v for k, v in report.user_properties if k == "criterion"), "")
    status = "PASS" if report.passed else "FAIL"
    _acceptance[report.nodeid.split("::")[-1]] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        status, detail = _acceptance[name]
        terminalreporter.write_line(f"{status}  {name}  {detail}")
