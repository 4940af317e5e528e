import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

#: ``(criterion, passed, detail)`` lines filled in by the acceptance suite.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: int(r[0][1:])):
        terminalreporter.write_line(f"{name:4s} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def acceptance_log():
    """Append ``(criterion, passed, detail)``; also printed immediately."""

    def log(name, ok, detail=""):
        ACCEPTANCE_LINES.append((name, bool(ok), detail))
        print(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")

    return log
