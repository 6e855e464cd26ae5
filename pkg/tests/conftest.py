import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    import acceptance_record

    if acceptance_record.LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(acceptance_record.LINES):
            terminalreporter.write_line(acceptance_record.LINES[key])
