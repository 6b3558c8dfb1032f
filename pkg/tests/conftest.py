import pytest

_RESULTS = []


class _Recorder:
    def __call__(self, number, name, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _RESULTS.append(line)
        print(line)
        assert passed, line


@pytest.fixture
def criterion():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
