from pathlib import Path

import pytest

from bassserre.gog import parse_gog

FIXTURES = Path(__file__).parent / "fixtures"


def load(name: str):
    return parse_gog((FIXTURES / name).read_text())


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


ACCEPTANCE_RESULTS = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
