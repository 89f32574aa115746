"""Seeded synthetic knowledge graphs with planted embedding structure.

Concept vectors are drawn uniformly on the unit sphere, entity vectors are
their concept vector plus isotropic Gaussian noise (left un-normalised), and
every translational property gets ``V_property = V_range - V_domain`` so that
``V_domain + V_property`` lands on ``V_range``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .embeddings import EmbeddingTable, PathLike, write_glove_text, write_tsv, write_word2vec_binary, write_word2vec_text
from .kg import KnowledgeSlice, PropertySchema, write_schema_tsv, write_subclass_ntriples, write_typing_tsv

SHAPES = ("chain", "balanced_tree")


@dataclass(frozen=True)
class FixtureSpec:
    n_concepts: int = 10
    entities_per_concept: int = 20
    dimension: int = 16
    noise_sigma: float = 0.01
    hierarchy_shape: str = "balanced_tree"
    branching: int = 3
    depth: int = 3
    translational_properties: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_concepts", "entities_per_concept", "dimension"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.translational_properties < 0:
            raise ValueError("translational_properties must be >= 0")
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise ValueError("noise_sigma must be a finite value >= 0")
        if self.hierarchy_shape not in SHAPES:
            raise ValueError(f"unknown hierarchy shape {self.hierarchy_shape!r}; expected one of {SHAPES}")
        if self.hierarchy_shape == "balanced_tree":
            if self.depth < 1 or self.branching < 1:
                raise ValueError(f"impossible tree shape: branching={self.branching}, depth={self.depth}")
            if self.n_concepts > self.capacity:
                raise ValueError(f"a tree with branching {self.branching} and depth {self.depth} "
                                 f"holds {self.capacity} concepts, {self.n_concepts} requested")
        if self.translational_properties and self.n_concepts < 2:
            raise ValueError("translational properties need at least 2 concepts")

    @property
    def capacity(self) -> int:
        if self.hierarchy_shape == "chain":
            return self.n_concepts
        return sum(self.branching ** k for k in range(self.depth))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FixtureSpec":
        data = dict(data)
        shape = data.get("hierarchy_shape")
        if isinstance(shape, Mapping):
            (name, params), = shape.items()
            data["hierarchy_shape"] = name
            data.update(params or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown fixture spec fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: PathLike) -> "FixtureSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Fixture:
    spec: FixtureSpec
    slice: KnowledgeSlice
    table: EmbeddingTable
    answer_key: dict
    concepts: list[str]
    properties: list[str]


def concept_id(i: int) -> str:
    return f"C{i:03d}"


def entity_id(i: int, j: int) -> str:
    return f"C{i:03d}_e{j:03d}"


def property_id(k: int) -> str:
    return f"p{k:03d}"


def _brute_cosine(u, v) -> float:
    dot = math.fsum(a * b for a, b in zip(u, v))
    nu = math.sqrt(math.fsum(a * a for a in u))
    nv = math.sqrt(math.fsum(b * b for b in v))
    return dot / (nu * nv)


def generate(spec: FixtureSpec) -> Fixture:
    rng = np.random.default_rng(spec.seed)
    n, m = spec.n_concepts, spec.dimension
    concepts = [concept_id(i) for i in range(n)]

    raw = rng.normal(size=(n, m))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    concept_vecs = raw / norms

    entities: list[str] = []
    entity_vecs = []
    labels: dict[str, str] = {}
    for i, c in enumerate(concepts):
        for j in range(spec.entities_per_concept):
            e = entity_id(i, j)
            entities.append(e)
            entity_vecs.append(concept_vecs[i] + rng.normal(0.0, spec.noise_sigma, size=m))
            labels[e] = c

    if spec.hierarchy_shape == "chain":
        parents = {concepts[i]: {concepts[i - 1]} for i in range(1, n)}
    else:
        parents = {concepts[i]: {concepts[(i - 1) // spec.branching]} for i in range(1, n)}

    properties: list[str] = []
    prop_vecs = []
    schema: dict[str, PropertySchema] = {}
    transitions = []
    for k in range(spec.translational_properties):
        d, r = (int(x) for x in rng.choice(n, size=2, replace=False))
        p = property_id(k)
        properties.append(p)
        prop_vecs.append(concept_vecs[r] - concept_vecs[d])
        schema[p] = PropertySchema(frozenset({concepts[d]}), frozenset({concepts[r]}))
        transitions.append({"property": p, "domain": concepts[d], "range": concepts[r], "score": 1.0})

    ids = tuple(concepts + entities + properties)
    rows = [concept_vecs] + ([np.array(entity_vecs)] if entity_vecs else []) + \
        ([np.array(prop_vecs)] if prop_vecs else [])
    table = EmbeddingTable(ids, np.vstack(rows), {"format": "fixture", "seed": spec.seed})
    slice_ = KnowledgeSlice.build({e: {c} for e, c in labels.items()}, parents, schema,
                                  concepts, {"source": "fixture", "seed": spec.seed})

    vec = {i: [float(x) for x in v] for i, v in zip(ids, table.vectors)}
    categorization = {}
    for c in concepts:
        members = [vec[e] for e in entities if labels[e] == c]
        mean = [math.fsum(col) / len(members) for col in zip(*members)]
        categorization[c] = _brute_cosine(mean, vec[c])
    k = spec.entities_per_concept
    nearest = {}
    for c in concepts:
        scored = sorted(entities, key=lambda e: (-_brute_cosine(vec[e], vec[c]), e))
        nearest[c] = scored[:k]

    answer_key = {
        "spec": asdict(spec),
        "labels": labels,
        "categorization": categorization,
        "nearest_entities": nearest,
        "transitions": transitions,
    }
    return Fixture(spec, slice_, table, answer_key, concepts, properties)


def write_fixture(fixture: Fixture, out_dir: PathLike) -> dict[str, Path]:
    """Write every loader format plus the answer key into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "embeddings_text": out / "embeddings.txt",
        "embeddings_binary": out / "embeddings.bin",
        "embeddings_glove": out / "embeddings.glove.txt",
        "embeddings_tsv": out / "embeddings.tsv",
        "typing": out / "typing.tsv",
        "schema": out / "schema.tsv",
        "subclass": out / "subclass.nt",
        "concepts": out / "concepts.txt",
        "properties": out / "properties.txt",
        "answer_key": out / "answer_key.json",
        "spec": out / "spec.json",
    }
    write_word2vec_text(fixture.table, paths["embeddings_text"])
    write_word2vec_binary(fixture.table, paths["embeddings_binary"])
    write_glove_text(fixture.table, paths["embeddings_glove"])
    write_tsv(fixture.table, paths["embeddings_tsv"])
    write_typing_tsv(fixture.slice, paths["typing"])
    write_schema_tsv(fixture.slice, paths["schema"])
    write_subclass_ntriples(fixture.slice, paths["subclass"])
    paths["concepts"].write_text("".join(c + "\n" for c in fixture.concepts), encoding="utf-8")
    paths["properties"].write_text("".join(p + "\n" for p in fixture.properties), encoding="utf-8")
    paths["answer_key"].write_text(json.dumps(fixture.answer_key, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    paths["spec"].write_text(json.dumps(asdict(fixture.spec), indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return paths
