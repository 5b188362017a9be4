from pathlib import Path

import pytest

from agentrec.corpus import Corpus
from agentrec.ingest import ingest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def mini_path() -> Path:
    return FIXTURES / "mini_events.jsonl"


@pytest.fixture(scope="session")
def mini_result(mini_path):
    with open(mini_path, encoding="utf-8") as fh:
        return ingest(fh)


@pytest.fixture(scope="session")
def mini_corpus(mini_result) -> Corpus:
    return Corpus(mini_result.trees, mini_result.pool)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
