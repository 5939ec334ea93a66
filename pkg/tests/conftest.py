import re

_CRITERION = re.compile(r"test_acceptance\.py::test_(ac\d+)_")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with the recorded detail."""
    status, details = {}, {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            match = _CRITERION.search(getattr(rep, "nodeid", ""))
            if not match:
                continue
            name = match.group(1).upper()
            ok = key == "passed"
            status[name] = status.get(name, True) and ok
            for prop, value in getattr(rep, "user_properties", []):
                if prop == "detail":
                    details.setdefault(name, []).append(str(value))
    if not status:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(status, key=lambda s: int(s[2:])):
        line = f"{name} {'PASS' if status[name] else 'FAIL'}"
        if name in details:
            line += ": " + "; ".join(details[name])
        terminalreporter.write_line(line)
