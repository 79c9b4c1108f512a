import pytest

from adastack.envs import make_env


@pytest.fixture
def passive():
    def build(L=3, mode="episodic", **kw):
        return make_env("passive_tmaze", L=L, mode=mode, **kw)
    return build


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list = []


@pytest.fixture
def report():
    def emit(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
