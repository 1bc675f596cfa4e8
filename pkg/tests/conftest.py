"""Collects acceptance-criterion outcomes and prints one line per criterion."""

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, seconds, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] criterion {number:2d}: {title} ({seconds:.2f} s)"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
