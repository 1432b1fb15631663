"""Collects ``@pytest.mark.acceptance("name")`` outcomes and prints one line per criterion."""

from collections import OrderedDict

_criteria: "OrderedDict[str, list[str]]" = OrderedDict()
_nodes: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): test belongs to the named acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker is not None and marker.args:
            name = marker.args[0]
            _nodes[item.nodeid] = name
            _criteria.setdefault(name, [])


def pytest_runtest_logreport(report):
    name = _nodes.get(report.nodeid)
    if name is None:
        return
    if report.when == "call" or report.failed:
        _criteria[name].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _criteria.items():
        if not outcomes:
            verdict = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            verdict = "PASS"
        else:
            verdict = "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {verdict:<7} {name}")

