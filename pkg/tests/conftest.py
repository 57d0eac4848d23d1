import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from harness import ACCEPTANCE  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n:>2}. {line}")
