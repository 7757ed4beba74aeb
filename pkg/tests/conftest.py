import pytest

CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[CRITERIA] = {}


@pytest.fixture
def record_criterion(request):
    """Store one pass/fail line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash[CRITERIA]

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        lines[number] = f"criterion {number} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        print(lines[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
