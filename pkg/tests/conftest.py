from __future__ import annotations

import numpy as np
import pytest

from concept_eval.embeddings import EmbeddingTable
from concept_eval.kg import KnowledgeSlice

_CRITERIA: list[tuple[int, str, str]] = []


def random_orthogonal(dim: int, seed: int) -> np.ndarray:
    q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


def transformed(table: EmbeddingTable, q: np.ndarray) -> EmbeddingTable:
    return EmbeddingTable(table.ids, np.asarray(table.vectors, np.float64) @ q.T, dict(table.source_meta))


def table_of(**vectors) -> EmbeddingTable:
    return EmbeddingTable.from_mapping({k: v for k, v in vectors.items()})


@pytest.fixture
def tree_slice() -> KnowledgeSlice:
    """root -> A -> {B, C}"""
    return KnowledgeSlice.build(subclass={"A": {"root"}, "B": {"A"}, "C": {"A"}})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, text = marker.args
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _CRITERIA.append((number, text, status))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, text, status in sorted(_CRITERIA):
        terminalreporter.write_line(f"[{status}] criterion {number}: {text}")
