import pytest

_criteria = {}


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker is not None:
            number, title = marker.args
            _criteria.setdefault(number, {"title": title, "outcomes": []})
            item.user_properties.append(("criterion", number))


def pytest_runtest_logreport(report):
    number = dict(report.user_properties).get("criterion")
    if number is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _criteria[number]["outcomes"].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    ran = {n: c for n, c in _criteria.items() if c["outcomes"]}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ran):
        entry = ran[number]
        status = "PASS" if all(entry["outcomes"]) else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}  {entry['title']}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
