import pytest
from hypothesis import settings

from pmscrit import GridCache, ModelParams, RuleContext

settings.register_profile("repeatable", derandomize=True, deadline=None)
settings.load_profile("repeatable")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def params07():
    return ModelParams(0.7, 1.96)


@pytest.fixture(scope="session")
def ctx07(params07):
    return RuleContext(params07, GridCache(None))


@pytest.fixture(autouse=True)
def _no_env_cache(monkeypatch):
    monkeypatch.delenv("PMSCRIT_CACHE_DIR", raising=False)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
