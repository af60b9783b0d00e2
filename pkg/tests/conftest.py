import pytest

from rwpt.stepdist import builtin


@pytest.fixture(scope="session")
def lazy():
    return builtin("lazy_srw")


@pytest.fixture(scope="session")
def king():
    return builtin("king")


@pytest.fixture(scope="session", params=["lazy_srw", "king"])
def walk(request):
    return builtin(request.param)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
