"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
from collections import OrderedDict

_OUTCOMES: "OrderedDict[str, dict]" = OrderedDict()


def _sort_key(number: str):
    return (int("".join(ch for ch in number if ch.isdigit()) or 0), number)


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            number, description = (str(a) for a in marker.args)
            item.user_properties.append(("criterion", (number, description)))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    number, description = crit
    entry = _OUTCOMES.setdefault(number, {"description": description, "tests": {}})
    name = report.nodeid.split("::")[-1]
    previous = entry["tests"].get(name, "passed")
    if report.failed:
        entry["tests"][name] = "failed"
    elif report.skipped:
        entry["tests"][name] = "skipped" if previous == "passed" else previous
    elif report.when == "call":
        entry["tests"][name] = previous


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES, key=_sort_key):
        entry = _OUTCOMES[number]
        states = set(entry["tests"].values())
        status = "FAIL" if "failed" in states else ("SKIP" if states == {"skipped"} else "PASS")
        terminalreporter.write_line(f"{status}  criterion {number}: {entry['description']}")
        if len(entry["tests"]) > 1 or status != "PASS":
            for name, state in entry["tests"].items():
                terminalreporter.write_line(f"        {state:7s} {name}")
