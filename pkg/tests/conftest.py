import pytest

_VERDICTS = {}


@pytest.fixture(scope="session")
def verdicts():
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS, key=lambda k: (int(k.split("-")[0]), k)):
        ok, detail = _VERDICTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
