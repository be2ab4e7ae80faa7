import pytest

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``record(n, ok, detail, elapsed, budget)`` stores one PASS/FAIL line and returns the verdict."""

    def record(n: int, ok: bool, detail: str, elapsed: float, budget: float) -> bool:
        in_time = elapsed <= budget
        verdict = bool(ok) and in_time
        timing = f"{elapsed:.1f} s of {budget:.0f} s" + ("" if in_time else " OVER BUDGET")
        ACCEPTANCE[n] = f"criterion {n:2d}: {'PASS' if verdict else 'FAIL'}  {detail}  [{timing}]"
        print(ACCEPTANCE[n])
        return verdict

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
