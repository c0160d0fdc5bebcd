import pytest

_ACCEPTANCE_LINES = []


class AcceptanceRecorder:
    def __call__(self, cid: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {cid}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed


@pytest.fixture
def acceptance():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
