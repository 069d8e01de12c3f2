import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def acceptance(request):
    """Record one acceptance line: ``acceptance(key, passed, detail)``."""
    results = request.config.stash[_RESULTS]

    def record(key, passed, detail=""):
        line = f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        results[key] = line
        print(line)
        return passed

    return record


def _order(key):
    head = "".join(c for c in key if c.isdigit())
    return int(head or 0), key


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results, key=_order):
            terminalreporter.write_line(results[key])
