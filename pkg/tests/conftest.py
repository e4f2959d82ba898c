import pytest

_LOG = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_LOG, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    entries = config.stash.get(_LOG, [])
    if not entries:
        return
    terminalreporter.section("acceptance")
    for e in entries:
        terminalreporter.write_line(f"{'PASS' if e['ok'] else 'FAIL'}  {e['label']}: {e['detail']}")
