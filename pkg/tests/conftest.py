import pytest

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def record_criterion(request):
    """Record one acceptance criterion's outcome for the terminal summary."""

    def record(number, title, passed, detail=""):
        ACCEPTANCE_RESULTS[number] = (title, bool(passed), detail)

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    number = getattr(item.function, "criterion", None)
    if number is not None and report.when == "call" and report.failed:
        title = ACCEPTANCE_RESULTS.get(number, (item.name, False, ""))[0]
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
        ACCEPTANCE_RESULTS[number] = (title, False, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
