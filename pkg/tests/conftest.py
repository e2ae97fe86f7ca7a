import random

import pytest

from genet.identity import NodeId, new_random_id

_criteria: list[tuple[str, bool, str]] = []


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def make_ids(rng):
    def make(n):
        return [new_random_id(rng) for _ in range(n)]

    return make


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary is printed at the end of the run."""

    def record(name: str, ok: bool, detail: str):
        _criteria.append((name, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _criteria:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def nid(value: int) -> NodeId:
    return NodeId(value)
