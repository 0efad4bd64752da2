from pathlib import Path

import pytest

from madacc.agents import TemplateSet
from madacc.backend import load_mock_script
from madacc.corpus import load_split, make_instances

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
CORPUS_DIR = FIXTURES / "corpus"
SPLIT_FILE = CORPUS_DIR / "split.txt"
FIXTURE_SCRIPT = FIXTURES / "mock" / "fixture.yaml"
FIG2_SCRIPT = FIXTURES / "mock" / "fig2.yaml"
FIXTURE_CONFIG = ROOT / "configs" / "fixture.yaml"

MINI_TEXT = "Cars are good. They are fast."
MINI_ANN = "T1\tClaim 0 14\tCars are good.\nT2\tPremise 15 29\tThey are fast.\n"


@pytest.fixture(scope="session")
def essays():
    return load_split(CORPUS_DIR, SPLIT_FILE)


@pytest.fixture(scope="session")
def instances(essays):
    return [inst for essay in essays for inst in make_instances(essay)]


@pytest.fixture(scope="session")
def templates():
    return TemplateSet.default()


@pytest.fixture
def fixture_backend():
    return load_mock_script(FIXTURE_SCRIPT)


@pytest.fixture
def fig2_backend():
    return load_mock_script(FIG2_SCRIPT)


@pytest.fixture(scope="session")
def fig2_instance(instances):
    return next(i for i in instances if i.target_text == "an apartment is more expensive")


# acceptance criteria report -------------------------------------------------

_CRITERIA: list[tuple[int, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _CRITERIA.append((number, title, status))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status in sorted(_CRITERIA):
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")
