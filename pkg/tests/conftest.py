import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo acceptance verdicts after the run, outside output capture."""
    module = sys.modules.get("tests.test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed in sorted(verdicts):
        word = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{word}  criterion {number:02d}: {title}")
