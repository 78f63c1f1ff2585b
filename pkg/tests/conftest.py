"""Terminal reporting for the acceptance criteria.

The acceptance tests record one line each; echoing them from a summary
hook keeps them visible even though pytest captures stdout.
"""

CRITERION_LINES = []


def record_criterion(line):
    CRITERION_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
