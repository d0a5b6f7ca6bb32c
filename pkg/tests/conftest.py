import pytest

_LINES = []


@pytest.fixture
def verdict(capsys):
    """Record and print one PASS/FAIL line, then assert."""

    def _verdict(number, name, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
        _LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
