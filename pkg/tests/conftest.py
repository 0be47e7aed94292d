import re

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_results: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        detail = props.get("detail", "")
        if report.failed and not detail:
            detail = str(report.longrepr).strip().splitlines()[-1][:160]
        verdict = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _results[int(m.group(1))] = (verdict, m.group(2).replace("_", " "), detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        verdict, name, detail = _results[n]
        terminalreporter.write_line(f"criterion {n:2d} {verdict}: {name} ({detail})")
