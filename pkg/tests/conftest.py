import logging

import pytest

from kgpath.kg import KnowledgeGraph, Query, bind_query


@pytest.fixture
def small_kg():
    return KnowledgeGraph.from_triples([("A", "r1", "B"), ("B", "r2", "C"), ("D", "r3", "A")])


def bound(kg, topics, answers=(), qid="q"):
    return bind_query(kg, Query(qid, "what", tuple(topics), tuple(answers)))


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.WARNING)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(n: int, ok: bool, detail: str) -> None:
    _ACCEPTANCE[n] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}")
