import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

VERDICTS = {}


def record_verdict(key, passed, detail):
    """Store one acceptance verdict; printed again in the terminal summary."""
    line = f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    VERDICTS[key] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[key])
