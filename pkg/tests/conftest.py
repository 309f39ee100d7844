import pytest

from jumpagmon import instances

_LINES = {}


def record(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    _LINES[criterion] = line
    print(line)
    return ok


@pytest.fixture(scope="session")
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_LINES):
        terminalreporter.write_line(_LINES[k])


@pytest.fixture(scope="session")
def ti1():
    inst = instances.ti1()
    inst.distance()
    return inst


@pytest.fixture(scope="session")
def ti2():
    inst = instances.ti2()
    inst.distance()
    return inst


@pytest.fixture(scope="session")
def ti3():
    inst = instances.ti3()
    inst.distance()
    return inst
