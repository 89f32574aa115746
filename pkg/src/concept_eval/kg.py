"""Knowledge-graph slice: typing assertions, class hierarchy and property schema.

Only the subset of N-Triples needed here is parsed: one triple per line with
IRIs in angle brackets. Literal objects and blank nodes are counted and
skipped. IRIs may be written in full or as ``prefix:local`` names, and the
four predicates of interest are recognised either way.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .embeddings import PathLike, PrefixMap, as_prefix_map
from .errors import CycleError, DisconnectedError, FormatError, UnknownIdentifierError

logger = logging.getLogger(__name__)

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"

_PREDICATES = {
    "typing": {RDF + "type", "rdf:type", "a"},
    "subclass": {RDFS + "subClassOf", "rdfs:subClassOf"},
    "domain": {RDFS + "domain", "rdfs:domain"},
    "range": {RDFS + "range", "rdfs:range"},
}
_KIND_OF = {form: kind for kind, forms in _PREDICATES.items() for form in forms}

MODES = ("typing", "subclass", "schema", "all")
TYPING_MODES = ("direct", "transitive")


@dataclass(frozen=True)
class PropertySchema:
    domains: frozenset[str] = frozenset()
    ranges: frozenset[str] = frozenset()


@dataclass(frozen=True)
class HierarchyPosition:
    concept: str
    depth: int


@dataclass(frozen=True, eq=False)
class KnowledgeSlice:
    """Immutable view over typing, subclass and schema assertions.

    Build instances with :meth:`build` (or the loaders); it derives the
    concept/entity/property sets, rejects cyclic hierarchies and precomputes
    depths. Depth is 1 at a root and ``1 + min(depth(parent))`` below.
    """

    typing: Mapping[str, frozenset[str]]
    subclass: Mapping[str, frozenset[str]]
    schema: Mapping[str, PropertySchema]
    concepts: frozenset[str]
    entities: frozenset[str]
    properties: frozenset[str]
    stats: dict = field(default_factory=dict)

    @classmethod
    def build(cls, typing: Optional[Mapping[str, Iterable[str]]] = None,
              subclass: Optional[Mapping[str, Iterable[str]]] = None,
              schema: Optional[Mapping[str, PropertySchema]] = None,
              concepts: Iterable[str] = (), stats: Optional[dict] = None) -> "KnowledgeSlice":
        typing_f = {e: frozenset(cs) for e, cs in (typing or {}).items() if cs}
        subclass_f = {c: frozenset(ps) for c, ps in (subclass or {}).items() if ps}
        schema_f = dict(schema or {})
        all_concepts = set(concepts)
        for cs in typing_f.values():
            all_concepts |= cs
        for child, parents in subclass_f.items():
            all_concepts.add(child)
            all_concepts |= parents
        for ps in schema_f.values():
            all_concepts |= ps.domains | ps.ranges
        inst = cls(typing=typing_f, subclass=subclass_f, schema=schema_f,
                   concepts=frozenset(all_concepts), entities=frozenset(typing_f),
                   properties=frozenset(schema_f), stats=dict(stats or {}))
        inst._finalize()
        return inst

    # -- construction helpers ------------------------------------------------

    def _finalize(self) -> None:
        children: dict[str, set[str]] = {c: set() for c in self.concepts}
        for child, parents in self.subclass.items():
            for p in parents:
                children[p].add(child)
        _check_acyclic(self.concepts, self.subclass)

        roots = sorted(c for c in self.concepts if not self.subclass.get(c))
        depth: dict[str, int] = {r: 1 for r in roots}
        queue = deque(roots)
        while queue:
            c = queue.popleft()
            for ch in sorted(children[c]):
                if ch not in depth:
                    depth[ch] = depth[c] + 1
                    queue.append(ch)

        members: dict[str, set[str]] = {}
        for e, cs in self.typing.items():
            for c in cs:
                members.setdefault(c, set()).add(e)

        neighbours = {c: set(children[c]) | set(self.subclass.get(c, ())) for c in self.concepts}
        object.__setattr__(self, "_children", {c: frozenset(s) for c, s in children.items()})
        object.__setattr__(self, "_depth", depth)
        object.__setattr__(self, "_roots", tuple(roots))
        object.__setattr__(self, "_members", {c: frozenset(s) for c, s in members.items()})
        object.__setattr__(self, "_neighbours", neighbours)

    def merge(self, other: "KnowledgeSlice") -> "KnowledgeSlice":
        typing = {e: set(cs) for e, cs in self.typing.items()}
        for e, cs in other.typing.items():
            typing.setdefault(e, set()).update(cs)
        subclass = {c: set(ps) for c, ps in self.subclass.items()}
        for c, ps in other.subclass.items():
            subclass.setdefault(c, set()).update(ps)
        schema = dict(self.schema)
        for p, s in other.schema.items():
            old = schema.get(p, PropertySchema())
            schema[p] = PropertySchema(old.domains | s.domains, old.ranges | s.ranges)
        stats = {"sources": self.stats.get("sources", [self.stats]) + other.stats.get("sources", [other.stats])}
        return KnowledgeSlice.build(typing, subclass, schema, self.concepts | other.concepts, stats)

    # -- structural queries --------------------------------------------------

    def _require(self, concept: str) -> None:
        if concept not in self.concepts:
            raise UnknownIdentifierError(concept, "concept")

    @property
    def roots(self) -> tuple[str, ...]:
        return self._roots  # type: ignore[attr-defined]

    def parents(self, concept: str) -> frozenset[str]:
        self._require(concept)
        return self.subclass.get(concept, frozenset())

    def children(self, concept: str) -> frozenset[str]:
        self._require(concept)
        return self._children[concept]  # type: ignore[attr-defined]

    def depth(self, concept: str) -> int:
        self._require(concept)
        return self._depth[concept]  # type: ignore[attr-defined]

    def position(self, concept: str) -> HierarchyPosition:
        return HierarchyPosition(concept, self.depth(concept))

    def ancestors(self, concept: str, *, include_self: bool = True) -> set[str]:
        self._require(concept)
        return _closure(concept, lambda c: self.subclass.get(c, ()), include_self)

    def descendants(self, concept: str, *, include_self: bool = True) -> set[str]:
        self._require(concept)
        return _closure(concept, lambda c: self._children[c], include_self)  # type: ignore[attr-defined]

    def path_distance(self, a: str, b: str) -> int:
        """Length of the shortest undirected path between two concepts."""
        self._require(a)
        self._require(b)
        if a == b:
            return 0
        neighbours = self._neighbours  # type: ignore[attr-defined]
        seen = {a}
        frontier = [a]
        dist = 0
        while frontier:
            dist += 1
            nxt = []
            for c in frontier:
                for n in neighbours[c]:
                    if n == b:
                        return dist
                    if n not in seen:
                        seen.add(n)
                        nxt.append(n)
            frontier = nxt
        raise DisconnectedError(f"no hierarchy path between {a!r} and {b!r}")

    def lowest_common_ancestor(self, a: str, b: str) -> str:
        """Deepest shared ancestor; ties go to the lexicographically smallest identifier.

        Candidates deeper than ``min(depth(a), depth(b))`` are excluded. With
        minimum-parent depths a concept can sit shallower than one of its own
        parents, and such a parent must not outrank the query concepts. On a
        tree the restriction never changes the answer; a depth-1 common
        ancestor always survives it.
        """
        common = self.ancestors(a) & self.ancestors(b)
        if not common:
            raise DisconnectedError(f"{a!r} and {b!r} have no common ancestor")
        depth = self._depth  # type: ignore[attr-defined]
        ceiling = min(depth[a], depth[b])
        return min((c for c in common if depth[c] <= ceiling), key=lambda c: (-depth[c], c))

    def entities_of(self, concept: str, mode: str = "direct") -> set[str]:
        self._require(concept)
        members = self._members  # type: ignore[attr-defined]
        if mode == "direct":
            return set(members.get(concept, ()))
        if mode != "transitive":
            raise ValueError(f"unknown typing mode {mode!r} (expected direct|transitive)")
        out: set[str] = set()
        for c in self.descendants(concept):
            out |= members.get(c, frozenset())
        return out

    def types_of(self, entity: str, mode: str = "direct") -> set[str]:
        direct = self.typing.get(entity)
        if direct is None:
            raise UnknownIdentifierError(entity, "entity")
        if mode == "direct":
            return set(direct)
        out: set[str] = set()
        for c in direct:
            out |= self.ancestors(c)
        return out


def _closure(start: str, step, include_self: bool) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        for n in step(stack.pop()):
            if n not in seen:
                seen.add(n)
                stack.append(n)
    if not include_self:
        seen.discard(start)
    return seen


def _check_acyclic(concepts: Iterable[str], parents: Mapping[str, frozenset[str]]) -> None:
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {c: WHITE for c in concepts}
    for start in sorted(colour):
        if colour[start] != WHITE:
            continue
        colour[start] = GREY
        path = [start]
        stack = [iter(sorted(parents.get(start, ())))]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                colour[path.pop()] = BLACK
                stack.pop()
                continue
            if colour[nxt] == GREY:
                cycle = path[path.index(nxt):] + [nxt]
                raise CycleError(cycle)
            if colour[nxt] == WHITE:
                colour[nxt] = GREY
                path.append(nxt)
                stack.append(iter(sorted(parents.get(nxt, ()))))


# -- loaders -----------------------------------------------------------------

class _Accumulator:
    def __init__(self) -> None:
        self.typing: dict[str, set[str]] = {}
        self.subclass: dict[str, set[str]] = {}
        self.domains: dict[str, set[str]] = {}
        self.ranges: dict[str, set[str]] = {}

    def add(self, kind: str, s: str, o: str) -> None:
        if kind == "typing":
            self.typing.setdefault(s, set()).add(o)
        elif kind == "subclass":
            self.subclass.setdefault(s, set()).add(o)
        elif kind == "domain":
            self.domains.setdefault(s, set()).add(o)
        elif kind == "range":
            self.ranges.setdefault(s, set()).add(o)

    def slice(self, stats: dict) -> KnowledgeSlice:
        schema = {
            p: PropertySchema(frozenset(self.domains.get(p, ())), frozenset(self.ranges.get(p, ())))
            for p in set(self.domains) | set(self.ranges)
        }
        return KnowledgeSlice.build(self.typing, self.subclass, schema, stats=stats)


def _split_term(text: str, path, lineno: int) -> tuple[str, str]:
    """Split off the leading term of ``text``; returns (term, rest)."""
    if text.startswith("<"):
        end = text.find(">")
        if end < 0:
            raise FormatError("unterminated IRI", path=path, line=lineno)
        return text[:end + 1], text[end + 1:].lstrip()
    if text.startswith("_:"):
        parts = text.split(None, 1)
        return parts[0], parts[1] if len(parts) > 1 else ""
    raise FormatError(f"expected '<IRI>' or blank node, got {text[:30]!r}", path=path, line=lineno)


def load_ntriples(path: PathLike, mode: str = "all", *,
                  prefixes: Union[PrefixMap, PathLike, None] = None) -> KnowledgeSlice:
    """Read typing/subclass/schema triples from a line-oriented N-Triples file."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    pmap = as_prefix_map(prefixes)
    wanted = {"typing"} if mode == "typing" else {"subclass"} if mode == "subclass" else \
        {"domain", "range"} if mode == "schema" else {"typing", "subclass", "domain", "range"}
    acc = _Accumulator()
    stats = {"source": str(path), "format": "ntriples", "mode": mode, "triples_used": 0,
             "ignored_predicates": 0, "filtered_by_mode": 0, "literal_lines_skipped": 0,
             "blank_node_lines_skipped": 0}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            subj, rest = _split_term(line, path, lineno)
            if not rest.startswith("<"):
                raise FormatError("predicate must be an IRI in angle brackets", path=path, line=lineno)
            pred, rest = _split_term(rest, path, lineno)
            if not rest.endswith("."):
                raise FormatError("triple is not terminated by '.'", path=path, line=lineno)
            body = rest[:-1].strip()
            if not body:
                raise FormatError("missing object", path=path, line=lineno)
            if body.startswith('"'):
                stats["literal_lines_skipped"] += 1
                continue
            obj, tail = _split_term(body, path, lineno)
            if tail:
                raise FormatError(f"unexpected text after object: {tail[:30]!r}", path=path, line=lineno)
            if subj.startswith("_:") or obj.startswith("_:"):
                stats["blank_node_lines_skipped"] += 1
                continue
            p = pred[1:-1]
            kind = _KIND_OF.get(p) or _KIND_OF.get(pmap.expand(p) if pmap else p)
            if kind is None:
                stats["ignored_predicates"] += 1
                continue
            if kind not in wanted:
                stats["filtered_by_mode"] += 1
                continue
            s, o = subj[1:-1], obj[1:-1]
            if not s or not o:
                raise FormatError("empty IRI", path=path, line=lineno)
            if pmap is not None:
                s, o = pmap.expand(s), pmap.expand(o)
            acc.add(kind, s, o)
            stats["triples_used"] += 1
    if stats["ignored_predicates"]:
        logger.info("%s: ignored %d triples with other predicates", path, stats["ignored_predicates"])
    return acc.slice(stats)


def _tsv_rows(path: PathLike, arity: int, what: str) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != arity:
                raise FormatError(f"expected {arity} tab-separated fields ({what}), got {len(parts)}",
                                  path=path, line=lineno)
            yield lineno, parts


def load_typing_tsv(path: PathLike, *, prefixes: Union[PrefixMap, PathLike, None] = None) -> KnowledgeSlice:
    """Read ``entity<TAB>concept`` lines."""
    pmap = as_prefix_map(prefixes)
    acc = _Accumulator()
    n = 0
    for lineno, (e, c) in _tsv_rows(path, 2, "entity, concept"):
        if not e or not c:
            raise FormatError("empty entity or concept", path=path, line=lineno)
        if pmap is not None:
            e, c = pmap.expand(e), pmap.expand(c)
        acc.add("typing", e, c)
        n += 1
    return acc.slice({"source": str(path), "format": "typing-tsv", "triples_used": n})


def load_schema_tsv(path: PathLike, *, prefixes: Union[PrefixMap, PathLike, None] = None) -> KnowledgeSlice:
    """Read ``property<TAB>domain<TAB>range`` lines; an empty field means undeclared."""
    pmap = as_prefix_map(prefixes)
    acc = _Accumulator()
    n = 0
    for lineno, (p, d, r) in _tsv_rows(path, 3, "property, domain, range"):
        if not p or not (d or r):
            raise FormatError("a schema row needs a property and a domain or range", path=path, line=lineno)
        if pmap is not None:
            p = pmap.expand(p)
            d = pmap.expand(d) if d else d
            r = pmap.expand(r) if r else r
        if d:
            acc.add("domain", p, d)
        if r:
            acc.add("range", p, r)
        n += 1
    return acc.slice({"source": str(path), "format": "schema-tsv", "triples_used": n})


def load_kg(paths: Iterable[PathLike], *, prefixes: Union[PrefixMap, PathLike, None] = None) -> KnowledgeSlice:
    """Load and merge several KG files.

    ``.nt`` files are read as N-Triples; TSV files are typing files when rows
    have two fields and schema files when they have three.
    """
    pmap = as_prefix_map(prefixes)
    merged: Optional[KnowledgeSlice] = None
    for path in paths:
        if Path(path).suffix.lower() == ".nt":
            part = load_ntriples(path, prefixes=pmap)
        else:
            part = _load_tsv_sniffed(path, pmap)
        merged = part if merged is None else merged.merge(part)
    if merged is None:
        raise ValueError("no knowledge-graph files given")
    return merged


def _load_tsv_sniffed(path: PathLike, pmap: Optional[PrefixMap]) -> KnowledgeSlice:
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\r\n")
            if line.strip() and not line.startswith("#"):
                fields = line.count("\t") + 1
                break
        else:
            logger.warning("%s: no assertions", path)
            return KnowledgeSlice.build(stats={"source": str(path), "format": "tsv", "triples_used": 0})
    if fields == 2:
        return load_typing_tsv(path, prefixes=pmap)
    if fields == 3:
        return load_schema_tsv(path, prefixes=pmap)
    raise FormatError(f"cannot tell TSV kind from {fields} fields (expected 2 or 3)", path=path, line=1)


def write_typing_tsv(slice_: KnowledgeSlice, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in sorted(slice_.typing):
            for c in sorted(slice_.typing[e]):
                fh.write(f"{e}\t{c}\n")


def write_schema_tsv(slice_: KnowledgeSlice, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in sorted(slice_.schema):
            s = slice_.schema[p]
            for d in sorted(s.domains) or [""]:
                for r in sorted(s.ranges) or [""]:
                    fh.write(f"{p}\t{d}\t{r}\n")


def write_subclass_ntriples(slice_: KnowledgeSlice, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in sorted(slice_.subclass):
            for p in sorted(slice_.subclass[c]):
                fh.write(f"<{c}> <{RDFS}subClassOf> <{p}> .\n")
