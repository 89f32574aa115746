"""Embedding tables: loading, writing, token composition and cosine similarity.

Supported on-disk formats:

* word2vec text: ``<count> <dim>`` header, then ``<token> <dim floats>`` rows
* word2vec binary: ASCII header, then per record the token bytes, one 0x20,
  ``dim`` little-endian float32 values and an optional 0x0A
* GloVe text: headerless ``<token> <floats>`` rows
* TSV: ``<identifier>\\t<float>\\t...`` rows

Every loader takes an optional :class:`PrefixMap` (or the path of a prefix
file) so that ``dbo:City`` and ``http://dbpedia.org/ontology/City`` resolve to
the same identifier.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import FormatError, UnknownIdentifierError, ZeroNormError

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

_F32_LE = np.dtype("<f4")


class CompositionMode(str, enum.Enum):
    """How the token vectors of a multi-token label are combined."""

    AVERAGE = "average"
    SUM = "sum"

    @classmethod
    def parse(cls, value: Union[str, "CompositionMode"]) -> "CompositionMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        if key in ("avg", "mean", "average"):
            return cls.AVERAGE
        if key == "sum":
            return cls.SUM
        raise ValueError(f"unknown composition mode {value!r} (expected average|sum)")


class PrefixMap:
    """Expands compact ``prefix:local`` identifiers to full IRIs.

    Angle brackets around IRIs are always stripped. Identifiers whose prefix
    is not registered pass through unchanged.
    """

    def __init__(self, mapping: Optional[Mapping[str, str]] = None):
        self._map: dict[str, str] = {}
        for prefix, expansion in (mapping or {}).items():
            self._map[prefix.rstrip(":")] = expansion

    @classmethod
    def load(cls, path: PathLike) -> "PrefixMap":
        mapping: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.rstrip("\r\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0] or not parts[1]:
                    raise FormatError("expected 'prefix<TAB>expansion'", path=path, line=lineno)
                mapping[parts[0]] = parts[1]
        return cls(mapping)

    def __len__(self) -> int:
        return len(self._map)

    def __bool__(self) -> bool:
        return True

    def items(self):
        return self._map.items()

    def expand(self, identifier: str) -> str:
        if len(identifier) >= 2 and identifier[0] == "<" and identifier[-1] == ">":
            identifier = identifier[1:-1]
        prefix, sep, local = identifier.partition(":")
        if sep and not local.startswith("//"):
            expansion = self._map.get(prefix)
            if expansion is not None:
                return expansion + local
        return identifier


def as_prefix_map(prefixes: Union[PrefixMap, PathLike, Mapping[str, str], None]) -> Optional[PrefixMap]:
    if prefixes is None or isinstance(prefixes, PrefixMap):
        return prefixes
    if isinstance(prefixes, Mapping):
        return PrefixMap(prefixes)
    return PrefixMap.load(prefixes)


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Immutable mapping from identifiers to vectors of a common dimension.

    ``vectors`` keeps the dtype it was loaded with (float32 for binary
    word2vec files); all arithmetic on it is done in float64.
    """

    ids: tuple[str, ...]
    vectors: np.ndarray
    source_meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors)
        if vectors.dtype.kind != "f":
            vectors = vectors.astype(np.float64)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be a 2-D array, got shape {vectors.shape}")
        if vectors.shape[1] < 1:
            raise ValueError("dimension must be >= 1")
        if vectors.shape[0] != len(self.ids):
            raise ValueError(f"{len(self.ids)} identifiers but {vectors.shape[0]} vectors")
        index: dict[str, int] = {}
        for i, ident in enumerate(self.ids):
            if not isinstance(ident, str) or not ident:
                raise ValueError(f"identifier #{i} is empty")
            if ident in index:
                raise ValueError(f"duplicate identifier {ident!r}")
            index[ident] = i
        if not np.all(np.isfinite(vectors)):
            bad = int(np.argwhere(~np.isfinite(vectors))[0][0])
            raise ValueError(f"non-finite component in vector of {self.ids[bad]!r}")
        vectors = vectors.view()
        vectors.flags.writeable = False
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_mapping(cls, entries: Mapping[str, Sequence[float]], source_meta: Optional[dict] = None,
                     dtype=np.float64) -> "EmbeddingTable":
        ids = tuple(entries)
        if not ids:
            raise ValueError("cannot infer the dimension of an empty mapping")
        vectors = np.array([np.asarray(entries[k], dtype=dtype) for k in ids], dtype=dtype)
        return cls(ids, vectors, dict(source_meta or {}))

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def index(self) -> Mapping[str, int]:
        return self._index  # type: ignore[attr-defined]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, identifier: object) -> bool:
        return identifier in self._index  # type: ignore[attr-defined]

    def __iter__(self) -> Iterator[str]:
        return iter(self.ids)

    def vector(self, identifier: str) -> np.ndarray:
        try:
            return self.vectors[self._index[identifier]]  # type: ignore[attr-defined]
        except KeyError:
            raise UnknownIdentifierError(identifier) from None

    def get(self, identifier: str, default=None):
        i = self._index.get(identifier)  # type: ignore[attr-defined]
        return default if i is None else self.vectors[i]

    def equals(self, other: "EmbeddingTable", *, atol: float = 0.0) -> bool:
        """True if both tables hold the same identifiers in the same order and equal vectors."""
        if self.ids != other.ids or self.vectors.shape != other.vectors.shape:
            return False
        if atol == 0.0:
            return bool(np.array_equal(self.vectors, other.vectors))
        return bool(np.allclose(self.vectors, other.vectors, rtol=0.0, atol=atol))

    def overlay(self, other: "EmbeddingTable") -> "EmbeddingTable":
        """Table with ``other``'s entries, plus those of ``self`` that ``other`` lacks."""
        if other.dimension != self.dimension:
            raise ValueError(f"dimension mismatch: {self.dimension} vs {other.dimension}")
        keep = [i for i, ident in enumerate(self.ids) if ident not in other]
        ids = tuple(other.ids) + tuple(self.ids[i] for i in keep)
        vectors = np.vstack([np.asarray(other.vectors, np.float64), np.asarray(self.vectors[keep], np.float64)])
        meta = dict(self.source_meta)
        meta["overlay"] = dict(other.source_meta)
        return EmbeddingTable(ids, vectors, meta)


# -- vector arithmetic -------------------------------------------------------

def cosine(u: Sequence[float], v: Sequence[float], *, names: tuple = (None, None)) -> float:
    """Cosine similarity in float64, clamped to [-1, 1].

    Raises :class:`ZeroNormError` (carrying the matching entry of ``names``)
    when either vector has zero norm.
    """
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vectors must be 1-D and of equal length, got {a.shape} and {b.shape}")
    na = math.sqrt(float(np.dot(a, a)))
    if na == 0.0:
        raise ZeroNormError(names[0])
    nb = math.sqrt(float(np.dot(b, b)))
    if nb == 0.0:
        raise ZeroNormError(names[1])
    value = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, value))


def compose(table: EmbeddingTable, tokens: Sequence[str], mode: Union[CompositionMode, str]) -> np.ndarray:
    """Combine token vectors element-wise by mean or sum (float64)."""
    mode = CompositionMode.parse(mode)
    if len(tokens) == 0:
        raise ValueError("cannot compose an empty token list")
    rows = []
    for tok in tokens:
        i = table.index.get(tok)
        if i is None:
            raise UnknownIdentifierError(tok, "token")
        rows.append(i)
    # summation order fixed by row index, so any permutation gives identical bits
    rows.sort()
    total = np.asarray(table.vectors[rows], dtype=np.float64).sum(axis=0)
    if mode is CompositionMode.AVERAGE:
        return total / len(rows)
    return total


def load_token_labels(path: PathLike, *, lowercase: bool = False,
                      prefixes: Union[PrefixMap, PathLike, None] = None) -> dict[str, list[str]]:
    """Read ``identifier<TAB>tok1 tok2 ...`` lines (already tokenized labels)."""
    pmap = as_prefix_map(prefixes)
    labels: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            ident, sep, rest = line.partition("\t")
            toks = rest.split()
            if not sep or not ident or not toks:
                raise FormatError("expected 'identifier<TAB>tokens'", path=path, line=lineno)
            if pmap is not None:
                ident = pmap.expand(ident)
            if ident in labels:
                raise FormatError(f"duplicate identifier {ident!r}", path=path, line=lineno)
            labels[ident] = [t.lower() for t in toks] if lowercase else toks
    return labels


def compose_labels(table: EmbeddingTable, labels: Mapping[str, Sequence[str]],
                   mode: Union[CompositionMode, str]) -> tuple[EmbeddingTable, dict[str, list[str]]]:
    """Build a table of composed label vectors.

    Labels with any out-of-vocabulary token are left out; they are returned
    in the second element together with their missing tokens.
    """
    mode = CompositionMode.parse(mode)
    ids: list[str] = []
    rows: list[np.ndarray] = []
    skipped: dict[str, list[str]] = {}
    for ident, toks in labels.items():
        missing = [t for t in toks if t not in table]
        if missing:
            skipped[ident] = missing
            continue
        ids.append(ident)
        rows.append(compose(table, toks, mode))
    if not ids:
        raise ValueError("no label could be composed from the token table")
    meta = {"composition": mode.value, "labels_composed": len(ids), "labels_skipped": len(skipped)}
    return EmbeddingTable(tuple(ids), np.vstack(rows), meta), skipped


# -- loaders -----------------------------------------------------------------

class _RowCollector:
    def __init__(self, path, lowercase: bool, prefixes: Optional[PrefixMap]):
        self.path = path
        self.lowercase = lowercase
        self.prefixes = prefixes
        self.ids: list[str] = []
        self.rows: list[np.ndarray] = []
        self.seen: dict[str, int] = {}

    def add(self, token: str, values, line: int, what: str = "line") -> None:
        if not token:
            raise FormatError("empty identifier", path=self.path, line=line)
        if self.lowercase:
            token = token.lower()
        if self.prefixes is not None:
            token = self.prefixes.expand(token)
        first = self.seen.get(token)
        if first is not None:
            raise FormatError(f"duplicate token {token!r} (first seen at {what} {first})",
                              path=self.path, line=line)
        vec = values
        if not np.all(np.isfinite(vec)):
            raise FormatError(f"non-finite value in vector of {token!r}", path=self.path, line=line)
        self.seen[token] = line
        self.ids.append(token)
        self.rows.append(vec)

    def table(self, dim: int, dtype, meta: dict) -> EmbeddingTable:
        if self.rows:
            vectors = np.vstack(self.rows).astype(dtype, copy=False)
        else:
            vectors = np.empty((0, dim), dtype=dtype)
        return EmbeddingTable(tuple(self.ids), vectors, meta)


def _parse_floats(fields: Sequence[str], path, line: int, token: str) -> np.ndarray:
    try:
        return np.array([float(f) for f in fields], dtype=np.float64)
    except ValueError:
        bad = next(f for f in fields if not _is_float(f))
        raise FormatError(f"unparseable number {bad!r} in vector of {token!r}", path=path, line=line) from None


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _text_lines(path: PathLike) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            yield lineno, raw.rstrip("\r\n")


def _meta(fmt: str, path: PathLike, lowercase: bool, prefixes: Optional[PrefixMap]) -> dict:
    return {"format": fmt, "path": str(path), "lowercase": lowercase, "prefix_map": prefixes is not None}


def load_word2vec_text(path: PathLike, *, lowercase: bool = False,
                       prefixes: Union[PrefixMap, PathLike, None] = None) -> EmbeddingTable:
    pmap = as_prefix_map(prefixes)
    lines = _text_lines(path)
    try:
        _, header = next(lines)
    except StopIteration:
        raise FormatError("empty file (missing '<count> <dim>' header)", path=path, line=1) from None
    parts = header.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise FormatError(f"malformed header {header!r} (expected '<count> <dim>')", path=path, line=1)
    count, dim = int(parts[0]), int(parts[1])
    if dim < 1:
        raise FormatError(f"declared dimension {dim} must be >= 1", path=path, line=1)

    rows = _RowCollector(path, lowercase, pmap)
    last = 1
    pending_blank: Optional[int] = None
    for lineno, line in lines:
        last = lineno
        if not line.strip():
            pending_blank = pending_blank or lineno
            continue
        if pending_blank is not None:
            raise FormatError("blank line inside the vector block", path=path, line=pending_blank)
        fields = line.rstrip(" ").split(" ")
        token = fields[0]
        if len(fields) - 1 != dim:
            raise FormatError(f"row arity {len(fields) - 1} != declared dim {dim} for token {token!r}",
                              path=path, line=lineno)
        if len(rows.ids) >= count:
            raise FormatError(f"more rows than the declared count {count}", path=path, line=lineno)
        rows.add(token, _parse_floats(fields[1:], path, lineno, token), lineno)
    if len(rows.ids) != count:
        raise FormatError(f"declared {count} rows but found {len(rows.ids)}", path=path, line=last)
    return rows.table(dim, np.float64, _meta("word2vec-text", path, lowercase, pmap))


def _load_headerless(path: PathLike, sep: Optional[str], fmt: str, lowercase: bool,
                     prefixes) -> EmbeddingTable:
    pmap = as_prefix_map(prefixes)
    rows = _RowCollector(path, lowercase, pmap)
    dim: Optional[int] = None
    for lineno, line in _text_lines(path):
        if not line.strip():
            continue
        fields = line.rstrip(" ").split(sep if sep else " ")
        token = fields[0]
        arity = len(fields) - 1
        if arity < 1:
            raise FormatError(f"row for {token!r} has no vector components", path=path, line=lineno)
        if dim is None:
            dim = arity
        elif arity != dim:
            raise FormatError(f"inconsistent arity: {arity} components for {token!r}, expected {dim}",
                              path=path, line=lineno)
        rows.add(token, _parse_floats(fields[1:], path, lineno, token), lineno)
    if dim is None:
        raise FormatError("empty file", path=path)
    return rows.table(dim, np.float64, _meta(fmt, path, lowercase, pmap))


def load_glove_text(path: PathLike, *, lowercase: bool = False,
                    prefixes: Union[PrefixMap, PathLike, None] = None) -> EmbeddingTable:
    return _load_headerless(path, None, "glove-text", lowercase, prefixes)


def load_tsv(path: PathLike, *, lowercase: bool = False,
             prefixes: Union[PrefixMap, PathLike, None] = None) -> EmbeddingTable:
    return _load_headerless(path, "\t", "tsv", lowercase, prefixes)


def load_word2vec_binary(path: PathLike, *, lowercase: bool = False,
                         prefixes: Union[PrefixMap, PathLike, None] = None) -> EmbeddingTable:
    """Read the word2vec C binary format.

    Vectors come back as float32 exactly as stored. Errors carry the record
    number in place of a line number.
    """
    pmap = as_prefix_map(prefixes)
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("missing header line", path=path, line=1)
    try:
        header = data[:nl].decode("ascii")
    except UnicodeDecodeError:
        raise FormatError("header is not ASCII", path=path, line=1) from None
    parts = header.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise FormatError(f"malformed header {header!r} (expected '<count> <dim>')", path=path, line=1)
    count, dim = int(parts[0]), int(parts[1])
    if dim < 1:
        raise FormatError(f"declared dimension {dim} must be >= 1", path=path, line=1)

    nbytes = dim * _F32_LE.itemsize
    rows = _RowCollector(path, lowercase, pmap)
    pos = nl + 1
    for record in range(1, count + 1):
        end = data.find(b" ", pos)
        if end < 0:
            partial = data[pos:pos + 40].decode("utf-8", "replace")
            raise FormatError(f"truncated file: record {record} of {count} missing "
                              f"(unterminated token {partial!r})", path=path, line=record)
        raw_token = data[pos:end]
        if b"\n" in raw_token or not raw_token:
            raise FormatError(f"corrupt token at byte {pos} in record {record} "
                              "(misaligned record; token containing a space?)", path=path, line=record)
        try:
            token = raw_token.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"token at byte {pos} in record {record} is not valid UTF-8 "
                              "(misaligned record; token containing a space?)", path=path, line=record) from None
        start = end + 1
        if start + nbytes > len(data):
            raise FormatError(f"truncated vector for token {token!r} (record {record}: "
                              f"{len(data) - start} of {nbytes} bytes)", path=path, line=record)
        vec = np.frombuffer(data, dtype=_F32_LE, count=dim, offset=start)
        rows.add(token, vec, record, what="record")
        pos = start + nbytes
        if data[pos:pos + 1] == b"\n":
            pos += 1
    if data[pos:].strip():
        raise FormatError(f"trailing data after the declared {count} records", path=path, line=count)
    return rows.table(dim, np.float32, _meta("word2vec-binary", path, lowercase, pmap))


# -- writers -----------------------------------------------------------------

def _check_writable_token(token: str) -> None:
    if not token or any(ch.isspace() for ch in token):
        raise ValueError(f"identifier {token!r} cannot be written: empty or contains whitespace")


def _format_row(vec: np.ndarray) -> list[str]:
    # repr() round-trips exactly for float64, and float32 values are exact in float64
    return [repr(float(x)) for x in vec]


def write_word2vec_text(table: EmbeddingTable, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table)} {table.dimension}\n")
        for ident, vec in zip(table.ids, table.vectors):
            _check_writable_token(ident)
            fh.write(ident + " " + " ".join(_format_row(vec)) + "\n")


def write_glove_text(table: EmbeddingTable, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ident, vec in zip(table.ids, table.vectors):
            _check_writable_token(ident)
            fh.write(ident + " " + " ".join(_format_row(vec)) + "\n")


def write_tsv(table: EmbeddingTable, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ident, vec in zip(table.ids, table.vectors):
            if "\t" in ident or "\n" in ident or not ident:
                raise ValueError(f"identifier {ident!r} cannot be written as TSV")
            fh.write(ident + "\t" + "\t".join(_format_row(vec)) + "\n")


def write_word2vec_binary(table: EmbeddingTable, path: PathLike) -> None:
    """Write the word2vec C binary format (vectors stored as float32)."""
    if table.vectors.dtype != np.float32:
        logger.debug("casting %s vectors to float32 for binary output", table.vectors.dtype)
    with open(path, "wb") as fh:
        fh.write(f"{len(table)} {table.dimension}\n".encode("ascii"))
        for ident, vec in zip(table.ids, table.vectors):
            _check_writable_token(ident)
            fh.write(ident.encode("utf-8") + b" ")
            fh.write(np.asarray(vec, dtype=_F32_LE).tobytes())
            fh.write(b"\n")


_LOADERS = {
    "word2vec-text": load_word2vec_text,
    "word2vec-binary": load_word2vec_binary,
    "glove": load_glove_text,
    "tsv": load_tsv,
}


def sniff_format(path: PathLike) -> str:
    """Guess the format of an embedding file from its suffix and first bytes."""
    suffix = Path(path).suffix.lower()
    if suffix == ".bin":
        return "word2vec-binary"
    if suffix == ".tsv":
        return "tsv"
    with open(path, "rb") as fh:
        head = fh.read(4096)
    first = head.split(b"\n", 1)[0]
    parts = first.split()
    if len(parts) == 2 and all(p.isdigit() for p in parts):
        rest = head[len(first) + 1:]
        try:
            rest.decode("utf-8")
        except UnicodeDecodeError as exc:
            # a cut-off multibyte character at the end of the probe is fine
            if exc.start < len(rest) - 4:
                return "word2vec-binary"
        return "word2vec-text"
    if b"\t" in first:
        return "tsv"
    return "glove"


def load_embeddings(path: PathLike, fmt: Optional[str] = None, **kwargs) -> EmbeddingTable:
    """Load ``path`` with the loader for ``fmt`` (sniffed when omitted)."""
    fmt = fmt or sniff_format(path)
    try:
        loader = _LOADERS[fmt]
    except KeyError:
        raise ValueError(f"unknown embedding format {fmt!r}; expected one of {sorted(_LOADERS)}") from None
    return loader(path, **kwargs)


def iter_vectors(table: EmbeddingTable, identifiers: Iterable[str]) -> Iterator[tuple[str, np.ndarray]]:
    for ident in identifiers:
        yield ident, table.vector(ident)
