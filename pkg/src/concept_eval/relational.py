"""Relational metrics over property domain/range assertions."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .embeddings import EmbeddingTable, PathLike, cosine
from .errors import ConceptEvalError, FormatError, InsufficientDataError, SchemaError, UnknownIdentifierError
from .kg import KnowledgeSlice

logger = logging.getLogger(__name__)

COMPATIBLE = "compatible"
INCOMPATIBLE = "incompatible"


@dataclass(frozen=True)
class TransitionResult:
    property: str
    domain: str
    range: str
    score: float

    @property
    def domain_equals_range(self) -> bool:
        return self.domain == self.range


def transition_score(domain_vec, property_vec, range_vec) -> float:
    """Cosine between ``domain + property`` and ``range``."""
    moved = np.asarray(domain_vec, dtype=np.float64) + np.asarray(property_vec, dtype=np.float64)
    return cosine(moved, range_vec, names=("domain + property", "range"))


def _lookup(table: EmbeddingTable, ident: str, kind: str) -> np.ndarray:
    vec = table.get(ident)
    if vec is None:
        raise UnknownIdentifierError(ident, f"{kind} embedding")
    return vec


def _schema_pairs(slice_: KnowledgeSlice, prop: str) -> list[tuple[str, str]]:
    s = slice_.schema.get(prop)
    if s is None:
        raise SchemaError(f"property {prop!r} has no domain/range assertions")
    if not s.domains or not s.ranges:
        missing = "domain" if not s.domains else "range"
        raise SchemaError(f"property {prop!r} has no declared {missing}")
    return [(d, r) for d in sorted(s.domains) for r in sorted(s.ranges)]


def transition_distance(table: EmbeddingTable, slice_: KnowledgeSlice, prop: str,
                        domain: Optional[str] = None, range_: Optional[str] = None) -> TransitionResult:
    """Transition score of ``prop`` for one (domain, range) pair.

    When the property declares several domains or ranges, the pair must be
    chosen with ``domain``/``range_``; :func:`transition_distances` covers
    the full product.
    """
    pairs = _schema_pairs(slice_, prop)
    if domain is not None or range_ is not None:
        pairs = [(d, r) for d, r in pairs if domain in (None, d) and range_ in (None, r)]
        if not pairs:
            raise SchemaError(f"({domain}, {range_}) is not a declared domain/range pair of {prop!r}")
    if len(pairs) > 1:
        raise SchemaError(f"property {prop!r} declares {len(pairs)} domain/range pairs; pick one")
    d, r = pairs[0]
    score = transition_score(_lookup(table, d, "domain"), _lookup(table, prop, "property"),
                             _lookup(table, r, "range"))
    return TransitionResult(prop, d, r, score)


def transition_distances(table: EmbeddingTable, slice_: KnowledgeSlice, prop: str) -> list[TransitionResult]:
    """One result per declared (domain, range) pair of ``prop``."""
    return [transition_distance(table, slice_, prop, d, r) for d, r in _schema_pairs(slice_, prop)]


@dataclass
class TransitionTable:
    rows: list[TransitionResult] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)


def transition_table(table: EmbeddingTable, slice_: KnowledgeSlice, properties: Sequence[str]) -> TransitionTable:
    out = TransitionTable()
    for prop in properties:
        try:
            out.rows.extend(transition_distances(table, slice_, prop))
        except ConceptEvalError as exc:
            out.errors.append((prop, str(exc)))
    return out


# -- selectional preference ------------------------------------------------------

@dataclass(frozen=True)
class PreferenceRow:
    concept: str
    property: str
    label: str


def selectional_preference_inventory(slice_: KnowledgeSlice, properties: Sequence[str],
                                     negatives_per_property: int, seed: int = 0) -> list[PreferenceRow]:
    """Concept/property pairs for human compatibility judgments.

    Declared domains and ranges are ``compatible``. Negatives are drawn from
    concepts that are neither a declared domain/range nor one of their
    ancestors or descendants.
    """
    if negatives_per_property < 0:
        raise ValueError("negatives_per_property must be >= 0")
    rng = random.Random(seed)
    rows: list[PreferenceRow] = []
    for prop in properties:
        s = slice_.schema.get(prop)
        if s is None or not (s.domains or s.ranges):
            raise SchemaError(f"property {prop!r} has no domain/range assertions")
        positives = sorted(s.domains | s.ranges)
        excluded: set[str] = set()
        for c in positives:
            excluded |= slice_.ancestors(c) | slice_.descendants(c)
        candidates = sorted(slice_.concepts - excluded)
        if len(candidates) < negatives_per_property:
            raise InsufficientDataError(
                f"property {prop!r}: {len(candidates)} negative candidates, {negatives_per_property} requested")
        ordered = [c for c in sorted(s.domains)] + [c for c in sorted(s.ranges) if c not in s.domains]
        rows.extend(PreferenceRow(c, prop, COMPATIBLE) for c in ordered)
        rows.extend(PreferenceRow(c, prop, INCOMPATIBLE) for c in rng.sample(candidates, negatives_per_property))
    return rows


def write_inventory(rows: Sequence[PreferenceRow], judge_path: PathLike, key_path: PathLike,
                    seed: int = 0) -> None:
    """Write the judge sheet (label column blank) and its answer key.

    Rows are shuffled with ``seed`` so their order reveals nothing; both files
    use the same order.
    """
    order = list(range(len(rows)))
    random.Random(seed).shuffle(order)
    with open(judge_path, "w", encoding="utf-8", newline="\n") as judge, \
            open(key_path, "w", encoding="utf-8", newline="\n") as key:
        judge.write("# concept\tproperty\tjudgment (compatible|incompatible)\n")
        key.write("# concept\tproperty\tlabel\n")
        for i in order:
            r = rows[i]
            judge.write(f"{r.concept}\t{r.property}\t\n")
            key.write(f"{r.concept}\t{r.property}\t{r.label}\n")


def _read_labelled(path: PathLike) -> dict[tuple[str, str], str]:
    out: dict[tuple[str, str], str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError("expected 'concept<TAB>property<TAB>label'", path=path, line=lineno)
            label = parts[2].strip().lower()
            if label and label not in (COMPATIBLE, INCOMPATIBLE):
                raise FormatError(f"label must be {COMPATIBLE} or {INCOMPATIBLE}, got {label!r}",
                                  path=path, line=lineno)
            out[(parts[0], parts[1])] = label
    return out


def judgment_accuracy(key_path: PathLike, responses_path: PathLike) -> tuple[float, int]:
    """Share of answered rows agreeing with the key, and the number answered."""
    key = _read_labelled(key_path)
    answers = {k: v for k, v in _read_labelled(responses_path).items() if v}
    scored = [k for k in answers if k in key]
    if not scored:
        raise InsufficientDataError("no answered row matches the answer key")
    correct = sum(1 for k in scored if answers[k] == key[k])
    return correct / len(scored), len(scored)
