import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concept_eval.errors import CycleError, DisconnectedError, FormatError, UnknownIdentifierError
from concept_eval.kg import (
    RDF,
    RDFS,
    KnowledgeSlice,
    load_kg,
    load_ntriples,
    load_schema_tsv,
    load_typing_tsv,
    write_schema_tsv,
    write_subclass_ntriples,
    write_typing_tsv,
)


def _nt(tmp_path, text, name="kg.nt"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def random_dag(n: int, seed: int, extra_parent_p: float = 0.2) -> dict[str, set[str]]:
    """Node 0 is the only root; every other node has parents with smaller index."""
    rng = random.Random(seed)
    parents: dict[str, set[str]] = {}
    for i in range(1, n):
        ps = {rng.randrange(i)}
        for j in range(i):
            if rng.random() < extra_parent_p / max(1, i):
                ps.add(j)
        parents[f"n{i:02d}"] = {f"n{j:02d}" for j in ps}
    return parents


def floyd_warshall(nodes, parents):
    inf = float("inf")
    d = {(a, b): (0 if a == b else inf) for a in nodes for b in nodes}
    for c, ps in parents.items():
        for p in ps:
            d[c, p] = d[p, c] = 1
    for k in nodes:
        for i in nodes:
            for j in nodes:
                if d[i, k] + d[k, j] < d[i, j]:
                    d[i, j] = d[i, k] + d[k, j]
    return d


def ancestors_oracle(node, parents):
    out = {node}
    for p in parents.get(node, ()):
        out |= ancestors_oracle(p, parents)
    return out


def depth_oracle(node, parents):
    ps = parents.get(node)
    if not ps:
        return 1
    return 1 + min(depth_oracle(p, parents) for p in ps)


# -- N-Triples -------------------------------------------------------------------

def test_ntriples_typing_example(tmp_path):
    s = load_ntriples(_nt(tmp_path, "<dbr:Berlin> <rdf:type> <dbo:City> .\n"))
    assert s.typing == {"dbr:Berlin": {"dbo:City"}}
    assert s.entities == {"dbr:Berlin"}
    assert "dbo:City" in s.concepts


def test_ntriples_subclass_example(tmp_path):
    s = load_ntriples(_nt(tmp_path, "<dbo:City> <rdfs:subClassOf> <dbo:Place> .\n"))
    assert s.subclass == {"dbo:City": {"dbo:Place"}}
    assert s.depth("dbo:Place") == 1 and s.depth("dbo:City") == 2


def test_ntriples_full_iris_and_schema(tmp_path):
    text = (
        f"<http://x/Berlin> <{RDF}type> <http://x/City> .\n"
        f"<http://x/capital> <{RDFS}domain> <http://x/Country> .\n"
        f"<http://x/capital> <{RDFS}range> <http://x/City> .\n"
        f"<http://x/Berlin> <http://x/population> \"3500000\"^^<http://www.w3.org/2001/XMLSchema#int> .\n"
        f"<http://x/Berlin> <http://x/name> \"Berlin . city\"@en .\n"
        f"<http://x/Berlin> <http://x/twin> <http://x/Paris> .\n"
        "# a comment\n\n"
        f"_:b1 <{RDF}type> <http://x/City> .\n"
    )
    s = load_ntriples(_nt(tmp_path, text))
    assert s.typing == {"http://x/Berlin": {"http://x/City"}}
    assert s.schema["http://x/capital"].domains == {"http://x/Country"}
    assert s.schema["http://x/capital"].ranges == {"http://x/City"}
    assert s.stats["literal_lines_skipped"] == 2
    assert s.stats["ignored_predicates"] == 1
    assert s.stats["blank_node_lines_skipped"] == 1


def test_ntriples_mode_filter(tmp_path):
    text = "<e> <rdf:type> <A> .\n<A> <rdfs:subClassOf> <B> .\n<p> <rdfs:domain> <A> .\n"
    p = _nt(tmp_path, text)
    assert load_ntriples(p, "typing").subclass == {}
    assert load_ntriples(p, "subclass").typing == {}
    schema_only = load_ntriples(p, "schema")
    assert schema_only.properties == {"p"} and not schema_only.typing
    assert load_ntriples(p, "all").stats["triples_used"] == 3
    with pytest.raises(ValueError):
        load_ntriples(p, "everything")


@pytest.mark.parametrize("line", [
    "<a> <rdf:type> <B>",
    "<a> rdf:type <B> .",
    "a <rdf:type> <B> .",
    "<a> <rdf:type> .",
    "<a <rdf:type> <B> .",
    "<a> <rdf:type> <B> <C> .",
])
def test_ntriples_malformed_reports_line(tmp_path, line):
    with pytest.raises(FormatError) as err:
        load_ntriples(_nt(tmp_path, "<x> <rdf:type> <Y> .\n" + line + "\n"))
    assert err.value.line == 2


def test_ntriples_cycle(tmp_path):
    with pytest.raises(CycleError) as err:
        load_ntriples(_nt(tmp_path, "<A> <rdfs:subClassOf> <B> .\n<B> <rdfs:subClassOf> <A> .\n"))
    assert set(err.value.members) == {"A", "B"}
    assert "A" in str(err.value) and "B" in str(err.value)


def test_longer_cycle_is_reported_along_its_path():
    with pytest.raises(CycleError) as err:
        KnowledgeSlice.build(subclass={"A": {"B"}, "B": {"C"}, "C": {"A"}, "D": {"A"}})
    members = err.value.members
    assert members[0] == members[-1]
    assert set(members) == {"A", "B", "C"}


def test_prefix_expansion_in_ntriples(tmp_path):
    s = load_ntriples(_nt(tmp_path, "<dbr:Berlin> <rdf:type> <dbo:City> .\n"),
                      prefixes={"dbo": "http://dbpedia.org/ontology/", "dbr": "http://dbpedia.org/resource/"})
    assert s.typing == {"http://dbpedia.org/resource/Berlin": {"http://dbpedia.org/ontology/City"}}


# -- TSV loaders -----------------------------------------------------------------

def test_typing_tsv(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text("dbr:Berlin\tdbo:City\ndbr:Berlin\tdbo:Place\n", encoding="utf-8")
    s = load_typing_tsv(p)
    assert s.typing == {"dbr:Berlin": {"dbo:City", "dbo:Place"}}
    p.write_text("dbr:Berlin\tdbo:City\textra\n", encoding="utf-8")
    with pytest.raises(FormatError) as err:
        load_typing_tsv(p)
    assert err.value.line == 1


def test_schema_tsv_and_kg_merge(tmp_path):
    (tmp_path / "schema.tsv").write_text("capital\tPopulatedPlace\tCity\n", encoding="utf-8")
    (tmp_path / "typing.tsv").write_text("Berlin\tCity\n", encoding="utf-8")
    _nt(tmp_path, "<City> <rdfs:subClassOf> <PopulatedPlace> .\n", "sub.nt")
    s = load_kg([tmp_path / "schema.tsv", tmp_path / "typing.tsv", tmp_path / "sub.nt"])
    assert s.schema["capital"].domains == {"PopulatedPlace"}
    assert s.entities_of("PopulatedPlace", "transitive") == {"Berlin"}
    assert load_schema_tsv(tmp_path / "schema.tsv").properties == {"capital"}


def test_writers_round_trip(tmp_path):
    s = KnowledgeSlice.build(typing={"e1": {"A"}, "e2": {"B", "A"}}, subclass={"B": {"A"}},
                             schema={})
    write_typing_tsv(s, tmp_path / "t.tsv")
    write_subclass_ntriples(s, tmp_path / "s.nt")
    write_schema_tsv(s, tmp_path / "sc.tsv")
    back = load_kg([tmp_path / "t.tsv", tmp_path / "s.nt", tmp_path / "sc.tsv"])
    assert back.typing == s.typing and back.subclass == s.subclass


# -- structural queries ------------------------------------------------------------

def test_path_distance_examples(tree_slice):
    assert tree_slice.path_distance("B", "B") == 0
    assert tree_slice.path_distance("B", "root") == 2
    assert tree_slice.path_distance("B", "C") == 2


def test_path_distance_errors(tree_slice):
    s = KnowledgeSlice.build(subclass={"A": {"root"}, "X": {"other"}})
    with pytest.raises(DisconnectedError):
        s.path_distance("A", "X")
    with pytest.raises(UnknownIdentifierError):
        tree_slice.path_distance("A", "nope")


def test_lca_examples(tree_slice):
    assert tree_slice.lowest_common_ancestor("B", "B") == "B"
    assert tree_slice.lowest_common_ancestor("B", "C") == "A"
    diamond = KnowledgeSlice.build(subclass={"X": {"root"}, "Y": {"root"}, "Z": {"X", "Y"}})
    assert diamond.lowest_common_ancestor("Z", "X") == "X"
    # Z's common ancestors with a fresh node under both X and Y: tie between X and Y -> smallest
    tie = KnowledgeSlice.build(subclass={"X": {"root"}, "Y": {"root"}, "Z": {"X", "Y"}, "W": {"X", "Y"}})
    assert tie.lowest_common_ancestor("Z", "W") == "X"


def test_lca_skips_parents_deeper_than_the_query():
    # D hangs under both C (depth 3) and root, so depth(D) = 2 < depth(C)
    s = KnowledgeSlice.build(subclass={"A": {"root"}, "C": {"A"}, "D": {"C", "root"}})
    assert s.depth("D") == 2
    assert s.lowest_common_ancestor("C", "D") == "A"


def test_lca_without_common_ancestor():
    s = KnowledgeSlice.build(subclass={"Z": {"X", "Y"}})
    assert s.path_distance("X", "Y") == 2
    with pytest.raises(DisconnectedError):
        s.lowest_common_ancestor("X", "Y")


def test_depth_uses_minimum_parent():
    s = KnowledgeSlice.build(subclass={"A": {"root"}, "B": {"A"}, "C": {"B", "root"}})
    assert s.depth("C") == 2
    assert s.position("B").depth == 3


def test_entities_of_modes():
    s = KnowledgeSlice.build(typing={"e1": {"City"}}, subclass={"City": {"Place"}})
    assert s.entities_of("City", "direct") == {"e1"}
    assert s.entities_of("Place", "transitive") == {"e1"}
    assert s.entities_of("Place", "direct") == set()
    with pytest.raises(UnknownIdentifierError):
        s.entities_of("Nope")
    assert s.types_of("e1", "transitive") == {"City", "Place"}


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 50), st.integers(0, 10_000))
def test_path_distance_matches_floyd_warshall_and_is_metric(n, seed):
    parents = random_dag(n, seed)
    s = KnowledgeSlice.build(subclass=parents, concepts=["n00"])
    nodes = sorted(s.concepts)
    oracle = floyd_warshall(nodes, parents)
    sample = nodes if n <= 15 else random.Random(seed).sample(nodes, 15)
    for a in sample:
        for b in sample:
            d = s.path_distance(a, b)
            assert d == oracle[a, b]
            assert d == s.path_distance(b, a)
            assert (d == 0) == (a == b)
    for a, b, c in itertools.product(sample[:8], repeat=3):
        assert s.path_distance(a, c) <= s.path_distance(a, b) + s.path_distance(b, c)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_lca_matches_ancestor_intersection(n, seed):
    parents = random_dag(n, seed, extra_parent_p=0.6)
    s = KnowledgeSlice.build(subclass=parents, concepts=["n00"])
    nodes = sorted(s.concepts)
    for node in nodes:
        assert s.depth(node) == depth_oracle(node, parents)
    rng = random.Random(seed)
    for _ in range(30):
        a, b = rng.choice(nodes), rng.choice(nodes)
        common = ancestors_oracle(a, parents) & ancestors_oracle(b, parents)
        ceiling = min(depth_oracle(a, parents), depth_oracle(b, parents))
        allowed = [c for c in common if depth_oracle(c, parents) <= ceiling]
        best = max(depth_oracle(c, parents) for c in allowed)
        expected = min(c for c in allowed if depth_oracle(c, parents) == best)
        lca = s.lowest_common_ancestor(a, b)
        assert lca == expected
        assert s.depth(lca) <= min(s.depth(a), s.depth(b))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000))
def test_transitive_entities_superset(n, seed):
    parents = random_dag(n, seed)
    rng = random.Random(seed)
    nodes = ["n00", *parents]
    typing = {f"e{i}": {rng.choice(nodes)} for i in range(40)}
    s = KnowledgeSlice.build(typing=typing, subclass=parents)
    for c in nodes:
        assert s.entities_of(c, "transitive") >= s.entities_of(c, "direct")
