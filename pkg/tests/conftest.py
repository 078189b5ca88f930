import os

import pytest

_CRITERIA = []


def pytest_addoption(parser):
    parser.addoption("--long", action="store_true", default=False,
                     help="also run expensive tests marked 'long'")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--long") or os.environ.get("BIONET_LONG") == "1":
        return
    skip = pytest.mark.skip(reason="long test; run with --long or BIONET_LONG=1")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA.append((marker.args[0], marker.args[1], status, detail, item.name))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, title, status, detail, name in sorted(_CRITERIA, key=lambda c: (str(c[0]), c[4])):
        line = f"criterion {number} [{status}] {title} ({name})"
        if detail:
            line += f" :: {detail}"
        terminalreporter.write_line(line)
