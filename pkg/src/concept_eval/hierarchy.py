"""Hierarchy-aware metrics: ontology similarity, absolute semantic error and
correlation with human relatedness judgments."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .embeddings import EmbeddingTable, PathLike, PrefixMap, as_prefix_map, cosine
from .errors import ConceptEvalError, FormatError, InsufficientDataError, UnknownIdentifierError
from .kg import KnowledgeSlice

logger = logging.getLogger(__name__)


class SimilarityMethod(str, enum.Enum):
    WU_PALMER = "wu_palmer"
    INVERSE_PATH = "inverse_path"

    @classmethod
    def parse(cls, value: Union[str, "SimilarityMethod"]) -> "SimilarityMethod":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise ValueError(f"unknown similarity method {value!r} (expected wu_palmer|inverse_path)") from None


def semantic_similarity(slice_: KnowledgeSlice, a: str, b: str,
                        method: Union[SimilarityMethod, str] = SimilarityMethod.WU_PALMER) -> float:
    """Ontology similarity of two concepts in [0, 1].

    wu_palmer: ``2 * depth(lca) / (depth(a) + depth(b))`` with roots at depth 1.
    inverse_path: ``1 / (1 + shortest undirected path length)``.
    """
    method = SimilarityMethod.parse(method)
    if method is SimilarityMethod.WU_PALMER:
        lca = slice_.lowest_common_ancestor(a, b)
        return 2.0 * slice_.depth(lca) / (slice_.depth(a) + slice_.depth(b))
    return 1.0 / (1.0 + slice_.path_distance(a, b))


def _concept_vector(table: EmbeddingTable, concept: str) -> np.ndarray:
    vec = table.get(concept)
    if vec is None:
        raise UnknownIdentifierError(concept, "concept embedding")
    return vec


def absolute_semantic_error(table: EmbeddingTable, slice_: KnowledgeSlice, a: str, b: str,
                            method: Union[SimilarityMethod, str] = SimilarityMethod.WU_PALMER) -> float:
    """``|ontology similarity - cosine|``; cosine is not rescaled, so the value lies in [0, 2]."""
    s_onto = semantic_similarity(slice_, a, b, method)
    s_emb = cosine(_concept_vector(table, a), _concept_vector(table, b), names=(a, b))
    return abs(s_onto - s_emb)


@dataclass
class ErrorMatrix:
    """Pairwise absolute semantic errors.

    Failed pairs hold NaN and are listed in ``errors``. ``mean``/``max`` are
    taken over the distinct unordered pairs (i < j) that succeeded.
    """

    concepts: list[str]
    values: np.ndarray
    method: str
    errors: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def _upper(self) -> np.ndarray:
        iu = np.triu_indices(len(self.concepts), k=1)
        vals = self.values[iu]
        return vals[~np.isnan(vals)]

    @property
    def mean(self) -> float:
        vals = self._upper
        return float(vals.mean()) if vals.size else math.nan

    @property
    def max(self) -> float:
        vals = self._upper
        return float(vals.max()) if vals.size else math.nan

    def write_csv(self, path: PathLike) -> None:
        import csv

        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["concept", *self.concepts])
            for c, row in zip(self.concepts, self.values):
                writer.writerow([c, *("" if math.isnan(v) else repr(float(v)) for v in row)])


def pairwise_error_matrix(table: EmbeddingTable, slice_: KnowledgeSlice, concepts: Sequence[str],
                          method: Union[SimilarityMethod, str] = SimilarityMethod.WU_PALMER) -> ErrorMatrix:
    method = SimilarityMethod.parse(method)
    concepts = list(concepts)
    n = len(concepts)
    values = np.full((n, n), np.nan)
    errors: list[tuple[str, str, str]] = []
    for i in range(n):
        for j in range(i, n):
            a, b = concepts[i], concepts[j]
            try:
                d = absolute_semantic_error(table, slice_, a, b, method)
            except ConceptEvalError as exc:
                errors.append((a, b, str(exc)))
                continue
            values[i, j] = values[j, i] = d
    return ErrorMatrix(concepts, values, method.value, errors)


# -- correlation ---------------------------------------------------------------

def rank_average(values: Sequence[float]) -> np.ndarray:
    """1-based fractional ranks; tied values share their average rank."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _check_pair(xs, ys) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"sequences must be 1-D and equally long, got {x.shape} and {y.shape}")
    if len(x) < 3:
        raise InsufficientDataError(f"need at least 3 observations, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("correlation inputs must be finite")
    return x, y


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x, y = _check_pair(xs, ys)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise InsufficientDataError("correlation is undefined for a constant sequence")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    x, y = _check_pair(xs, ys)
    return pearson(rank_average(x), rank_average(y))


CORRELATIONS = {"spearman": spearman, "pearson": pearson}


@dataclass(frozen=True)
class JudgeInventory:
    rows: tuple[tuple[str, str, float], ...]
    scale: tuple[float, float]

    def __post_init__(self) -> None:
        lo, hi = self.scale
        if not lo < hi:
            raise ValueError(f"invalid scale [{lo}, {hi}]")
        for a, b, s in self.rows:
            if not lo <= s <= hi:
                raise ValueError(f"score {s} for ({a}, {b}) outside scale [{lo}, {hi}]")


def load_judgments(path: PathLike, *, prefixes: Union[PrefixMap, PathLike, None] = None) -> JudgeInventory:
    """Read a judge file.

    The first non-blank line declares the scale as ``# scale <lo> <hi>``;
    each further line is ``concept_a<TAB>concept_b<TAB>score``.
    """
    pmap = as_prefix_map(prefixes)
    scale: Optional[tuple[float, float]] = None
    rows: list[tuple[str, str, float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if scale is None:
                parts = line.lstrip("#").replace(":", " ").split()
                if len(parts) != 3 or parts[0].lower() != "scale" or not line.startswith("#"):
                    raise FormatError("first line must be '# scale <lo> <hi>'", path=path, line=lineno)
                try:
                    scale = (float(parts[1]), float(parts[2]))
                except ValueError:
                    raise FormatError("scale bounds must be numbers", path=path, line=lineno) from None
                if not scale[0] < scale[1]:
                    raise FormatError(f"empty scale [{scale[0]}, {scale[1]}]", path=path, line=lineno)
                continue
            if line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[0] or not parts[1]:
                raise FormatError("expected 'concept_a<TAB>concept_b<TAB>score'", path=path, line=lineno)
            try:
                score = float(parts[2])
            except ValueError:
                raise FormatError(f"unparseable score {parts[2]!r}", path=path, line=lineno) from None
            if not scale[0] <= score <= scale[1]:
                raise FormatError(f"score {score} outside scale [{scale[0]}, {scale[1]}]", path=path, line=lineno)
            a, b = parts[0], parts[1]
            if pmap is not None:
                a, b = pmap.expand(a), pmap.expand(b)
            rows.append((a, b, score))
    if scale is None:
        raise FormatError("empty judgment file", path=path)
    return JudgeInventory(tuple(rows), scale)


def write_judgments(inventory: JudgeInventory, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# scale {inventory.scale[0]!r} {inventory.scale[1]!r}\n")
        for a, b, s in inventory.rows:
            fh.write(f"{a}\t{b}\t{s!r}\n")


@dataclass(frozen=True)
class RelatednessResult:
    correlation: float
    method: str
    n_pairs: int
    dropped: tuple[tuple[str, str, str], ...] = ()


def relatedness_correlation(table: EmbeddingTable, inventory: JudgeInventory,
                            which: str = "spearman") -> RelatednessResult:
    """Correlate judge scores with the cosine of each concept pair.

    Pairs with a missing or zero vector are dropped and reported.
    """
    try:
        corr = CORRELATIONS[which]
    except KeyError:
        raise ValueError(f"unknown correlation {which!r} (expected spearman|pearson)") from None
    judged: list[float] = []
    sims: list[float] = []
    dropped: list[tuple[str, str, str]] = []
    for a, b, score in inventory.rows:
        try:
            s = cosine(_concept_vector(table, a), _concept_vector(table, b), names=(a, b))
        except ConceptEvalError as exc:
            dropped.append((a, b, str(exc)))
            continue
        judged.append(score)
        sims.append(s)
    if len(judged) < 3:
        raise InsufficientDataError(
            f"only {len(judged)} resolvable pairs (need 3); dropped: "
            + "; ".join(f"{a}/{b}: {why}" for a, b, why in dropped))
    return RelatednessResult(corr(judged, sims), which, len(judged), tuple(dropped))
