import re

import pytest

CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (number, description)."""
    state = {}

    def _mark(number, text):
        state["key"] = (number, text)

    yield _mark
    if "key" in state:
        rep = getattr(request.node, "rep_call", None)
        ok = rep is not None and rep.passed
        CRITERIA[state["key"]] = ok


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def _order(kv):
    num = str(kv[0][0])
    return int(re.match(r"\d+", num).group()), num


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, text), ok in sorted(CRITERIA.items(), key=_order):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {text}")
