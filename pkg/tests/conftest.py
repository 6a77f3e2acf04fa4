import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run the long training criteria (tens of minutes to hours)")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): an acceptance criterion reported in the summary")


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="long training run; pass --runslow to include")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


_criteria = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _criteria.append((status, props["criterion"], props.get("measured", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, measured in _criteria:
        line = f"{status} {name}"
        if measured:
            line += f" | {measured}"
        terminalreporter.write_line(line)
