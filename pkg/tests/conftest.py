"""Shared pytest hooks: a one-line summary per acceptance criterion."""


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props:
                status = "PASS" if rep.passed else "FAIL"
                lines.append((props["criterion"], f"criterion {props['criterion']:>2}: {status}  "
                                                  f"{props.get('measured', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
