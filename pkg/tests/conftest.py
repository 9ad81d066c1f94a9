import pytest

# criterion id -> (passed, one-line detail); filled by the acceptance tests
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def record_criterion():
    def record(cid, passed, detail):
        ACCEPTANCE_RESULTS[cid] = (bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {cid}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_RESULTS, key=lambda c: (int(c.rstrip("ab")), c)):
        ok, detail = ACCEPTANCE_RESULTS[cid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {cid:>3}  {detail}")
