import pytest

# criterion number -> list of (clause, passed, detail)
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(criterion: int, clause: str, passed: bool, detail: str = ""):
        ACCEPTANCE.setdefault(criterion, []).append((clause, bool(passed), detail))
        print(f"criterion {criterion} [{clause}]: {'PASS' if passed else 'FAIL'} {detail}")
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        clauses = ACCEPTANCE[k]
        ok = all(p for _, p, _ in clauses)
        parts = "; ".join(f"{c}: {'ok' if p else 'FAIL'} ({d})" for c, p, d in clauses)
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {parts}")
