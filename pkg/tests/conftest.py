import logging

import pytest

from wbwmt import fixtures, ngram_lm

# filled by test_acceptance.py, printed after the run
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture(autouse=True)
def _quiet_discount_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="wbwmt.ngram_lm")


@pytest.fixture(scope="session")
def toy():
    return fixtures.toy_language(seed=0)


@pytest.fixture(scope="session")
def toy_lm(toy):
    logging.getLogger("wbwmt.ngram_lm").setLevel(logging.ERROR)
    return ngram_lm.train(toy.lm_corpus, 3)


@pytest.fixture(scope="session")
def rotation():
    return fixtures.rotation_fixture(n=500, d=10, seed=0)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixtures")
    fixtures.write_fixtures(str(out))
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
