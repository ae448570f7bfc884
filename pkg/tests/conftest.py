from pathlib import Path

import pytest

from critrelay.gridcase import load_case_file

DATA = Path(__file__).resolve().parents[1] / "src" / "critrelay" / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def wscc9():
    return load_case_file(DATA / "wscc9.toml")


@pytest.fixture(scope="session")
def smib():
    return load_case_file(DATA / "smib.toml")


@pytest.fixture(scope="session")
def ieee39():
    return load_case_file(DATA / "ieee39.toml")


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number: int, ok: bool, detail: str = ""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines[number] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.acceptance_lines
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
