"""Categorization and coherence of concept embeddings.

Categorization compares a concept vector with the mean vector of the
entities it types. Coherence counts how many of the ``n`` pooled entities
nearest to a concept vector carry that concept as background concept.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .embeddings import EmbeddingTable, PathLike, cosine
from .errors import FormatError, NoEntitiesError, UnknownIdentifierError, ZeroNormError
from .kg import KnowledgeSlice

logger = logging.getLogger(__name__)


class EntityMean(NamedTuple):
    vector: np.ndarray
    used: int
    skipped: int


@dataclass(frozen=True)
class CategorizationResult:
    concept: str
    score: float
    n_entities_used: int
    n_entities_skipped_oov: int
    typing_mode: str = "direct"


@dataclass(frozen=True)
class EntityPool:
    """Labelled sample of ``(entity, background concept)`` pairs.

    ``available`` records, per concept, how many embeddable candidates the
    sampler could choose from (so shortfalls below ``batch_size`` are visible).
    """

    members: tuple[tuple[str, str], ...]
    batch_size: int
    seed: int
    available: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        seen: set[str] = set()
        counts: dict[str, int] = {}
        for entity, concept in self.members:
            if entity in seen:
                raise ValueError(f"entity {entity!r} appears twice in the pool")
            seen.add(entity)
            counts[concept] = counts.get(concept, 0) + 1
            if counts[concept] > self.batch_size:
                raise ValueError(f"concept {concept!r} has more than batch_size={self.batch_size} members")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def entities(self) -> list[str]:
        return [e for e, _ in self.members]

    def label_of(self, entity: str) -> str:
        return self._labels[entity]

    @property
    def _labels(self) -> dict[str, str]:
        cached = self.__dict__.get("_label_cache")
        if cached is None:
            cached = dict(self.members)
            object.__setattr__(self, "_label_cache", cached)
        return cached


def averaged_entity_vector(table: EmbeddingTable, entities: Iterable[str]) -> EntityMean:
    """Component-wise float64 mean of the entity vectors found in ``table``.

    Entities are summed in sorted order, so the result does not depend on the
    iteration order of ``entities``.
    """
    found: list[int] = []
    skipped = 0
    for e in sorted(set(entities)):
        i = table.index.get(e)
        if i is None:
            skipped += 1
        else:
            found.append(i)
    if not found:
        raise NoEntitiesError(f"none of the {skipped} entities has an embedding")
    total = np.asarray(table.vectors[found], dtype=np.float64).sum(axis=0)
    return EntityMean(total / len(found), len(found), skipped)


def categorization(table: EmbeddingTable, slice_: KnowledgeSlice, concept: str,
                   mode: str = "direct", *, limit: Optional[int] = None,
                   seed: Optional[int] = None) -> CategorizationResult:
    """Cosine between a concept vector and the mean vector of its entities.

    ``limit`` caps the number of entities considered; when the concept has
    more, a seeded uniform sample of that size is taken.
    """
    concept_vec = table.vector(concept) if concept in table else None
    if concept_vec is None:
        raise UnknownIdentifierError(concept, "concept embedding")
    entities = sorted(slice_.entities_of(concept, mode))
    if not entities:
        raise NoEntitiesError(f"concept {concept!r} types no entities ({mode})")
    if limit is not None and len(entities) > limit:
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(entities), size=limit, replace=False)
        entities = [entities[i] for i in sorted(picked)]
    try:
        mean = averaged_entity_vector(table, entities)
    except NoEntitiesError:
        raise NoEntitiesError(f"none of the {len(entities)} entities of {concept!r} has an embedding") from None
    score = cosine(mean.vector, concept_vec, names=(f"mean of {concept}", concept))
    return CategorizationResult(concept, score, mean.used, mean.skipped, mode)


def _embeddable(table: EmbeddingTable, entity: str) -> bool:
    vec = table.get(entity)
    return vec is not None and bool(np.any(vec))


def build_pool(slice_: KnowledgeSlice, table: EmbeddingTable, concepts: Sequence[str],
               batch_size: int = 20, seed: int = 0, mode: str = "direct") -> EntityPool:
    """Sample up to ``batch_size`` embeddable entities per concept and mix them.

    Sampling draws from a single generator in concept order. An entity typed
    by several of the concepts belongs to the first concept that samples it.
    Entities that are missing from ``table`` or have a zero vector are never
    candidates.
    """
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    members: list[tuple[str, str]] = []
    available: dict[str, int] = {}
    for concept in concepts:
        embeddable = [e for e in sorted(slice_.entities_of(concept, mode)) if _embeddable(table, e)]
        if not embeddable:
            raise NoEntitiesError(f"concept {concept!r} has no embeddable entities")
        candidates = [e for e in embeddable if e not in taken]
        available[concept] = len(candidates)
        k = min(batch_size, len(candidates))
        if k < batch_size:
            logger.warning("concept %s: only %d of %d requested entities available", concept, k, batch_size)
        picked = rng.choice(len(candidates), size=k, replace=False) if k else []
        for i in picked:
            members.append((candidates[int(i)], concept))
            taken.add(candidates[int(i)])
    return EntityPool(tuple(members), batch_size, seed, available)


def _pool_matrix(table: EmbeddingTable, entities: Sequence[str]) -> np.ndarray:
    rows = []
    for e in entities:
        i = table.index.get(e)
        if i is None:
            raise UnknownIdentifierError(e, "pool entity")
        rows.append(i)
    return np.asarray(table.vectors[rows], dtype=np.float64)


def pool_similarities(table: EmbeddingTable, pool: EntityPool, concept: str) -> np.ndarray:
    """Cosine of every pool entity with the concept vector, in pool order."""
    target = np.asarray(table.vector(concept), dtype=np.float64)
    tnorm = np.sqrt((target * target).sum())
    if tnorm == 0.0:
        raise ZeroNormError(concept)
    matrix = _pool_matrix(table, pool.entities)
    # row-wise reductions keep identical rows bit-identical (tie rule depends on it)
    norms = np.sqrt((matrix * matrix).sum(axis=1))
    if np.any(norms == 0.0):
        raise ZeroNormError(pool.entities[int(np.argmin(norms))])
    sims = (matrix * target).sum(axis=1) / (norms * tnorm)
    return np.clip(sims, -1.0, 1.0)


def top_k_entities(table: EmbeddingTable, pool: EntityPool, concept: str, k: int) -> list[str]:
    """The ``k`` pool entities most cosine-similar to ``concept``.

    Ordered by descending similarity, ties by ascending identifier.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(pool) == 0:
        return []
    sims = pool_similarities(table, pool, concept)
    ids = pool.entities
    order = sorted(range(len(ids)), key=lambda i: (-sims[i], ids[i]))
    return [ids[i] for i in order[:k]]


def coherence(table: EmbeddingTable, slice_: KnowledgeSlice, pool: EntityPool, concept: str,
              n: int = 10, *, match: str = "label", typing_mode: str = "direct") -> float:
    """Fraction of the ``n`` nearest pool entities sharing ``concept``.

    ``match="label"`` compares against the background concept the pool
    assigned; ``match="any_type"`` accepts any entity whose typing set
    (direct or transitive, per ``typing_mode``) contains the concept. A radius
    larger than the pool is clamped to the pool size with a warning.
    """
    if match not in ("label", "any_type"):
        raise ValueError(f"unknown match mode {match!r} (expected label|any_type)")
    if n < 1:
        raise ValueError("radius must be >= 1")
    radius = n
    if n > len(pool):
        warnings.warn(f"radius {n} exceeds pool size {len(pool)}; using the whole pool", stacklevel=2)
        radius = len(pool)
    if radius == 0:
        raise NoEntitiesError("empty pool")
    nearest = top_k_entities(table, pool, concept, radius)
    if match == "label":
        hits = sum(1 for e in nearest if pool.label_of(e) == concept)
    else:
        hits = sum(1 for e in nearest if concept in slice_.types_of(e, typing_mode))
    return hits / radius


def write_pool(pool: EntityPool, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# seed={pool.seed}\tbatch_size={pool.batch_size}\n")
        for entity, concept in pool.members:
            fh.write(f"{entity}\t{concept}\n")


def read_pool(path: PathLike) -> EntityPool:
    seed: Optional[int] = None
    batch_size: Optional[int] = None
    members: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    if key == "seed":
                        seed = int(value)
                    elif key == "batch_size":
                        batch_size = int(value)
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(parts):
                raise FormatError("expected 'entity<TAB>concept'", path=path, line=lineno)
            members.append((parts[0], parts[1]))
    if seed is None or batch_size is None:
        raise FormatError("missing '# seed=... batch_size=...' header", path=path, line=1)
    return EntityPool(tuple(members), batch_size, seed)
