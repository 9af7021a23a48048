import pytest

from mdbins import AllocationConfig, BallSourceSpec, ProcessSpec

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion for the session summary."""
    def _report(criterion: int, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:>2}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


def make_config(n=4, D=1, m=10, f=1, kind="d-choice", d=2, beta=None, seed=0, checkpoints=None, source=None):
    if source is None:
        source = BallSourceSpec("fixed-f-uniform", f=f)
    if kind in ("d-choice", "greedy-with-ties", "parallel-rounds"):
        proc = ProcessSpec(kind, d=d)
    elif kind == "beta-choice":
        proc = ProcessSpec(kind, beta=beta)
    else:
        proc = ProcessSpec(kind)
    return AllocationConfig(n, D, m, source, proc, seed, checkpoints)
