"""Shared pytest plumbing: the acceptance suite records one verdict line per
criterion and the lines are repeated in the terminal summary."""

import pytest

_VERDICTS = []


class Verdicts:
    """Collects ``PASS``/``FAIL`` lines; each line is also printed at once."""

    def record(self, criterion, ok, detail):
        line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'} - {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    def skip(self, criterion, reason):
        line = f"criterion {criterion:>2}: SKIP - {reason}"
        _VERDICTS.append(line)
        print(line)


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
