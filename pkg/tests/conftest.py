import pytest

# criterion number -> list of (part, passed, detail)
_CRITERIA = {}


class CriterionLog:
    def record(self, number, part, passed, detail):
        _CRITERIA.setdefault(number, []).append((part, bool(passed), detail))
        return passed


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{part}: {'ok' if ok else 'FAILED'} ({info})" for part, ok, info in parts)
        terminalreporter.write_line(f"criterion {number}: {verdict}  {detail}")
