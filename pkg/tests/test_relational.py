import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concept_eval.errors import InsufficientDataError, SchemaError, UnknownIdentifierError, ZeroNormError
from concept_eval.fixtures import FixtureSpec, generate
from concept_eval.kg import KnowledgeSlice, PropertySchema
from concept_eval.relational import (
    COMPATIBLE,
    INCOMPATIBLE,
    judgment_accuracy,
    selectional_preference_inventory,
    transition_distance,
    transition_distances,
    transition_score,
    transition_table,
    write_inventory,
)

from conftest import random_orthogonal, table_of, transformed


def schema_slice(**props):
    schema = {p: PropertySchema(frozenset(d), frozenset(r)) for p, (d, r) in props.items()}
    return KnowledgeSlice.build(schema=schema)


def test_exact_translation():
    s = schema_slice(p=({"D"}, {"R"}))
    t = table_of(D=(1.0, 0.0), p=(-1.0, 1.0), R=(0.0, 1.0))
    r = transition_distance(t, s, "p")
    assert r.score == 1.0 and (r.domain, r.range) == ("D", "R")
    assert not r.domain_equals_range


def test_additive_identity_and_zero_sum():
    assert transition_score((1.0, 0.0), (0.0, 0.0), (1.0, 0.0)) == 1.0
    with pytest.raises(ZeroNormError):
        transition_score((1.0, 0.0), (-1.0, 0.0), (1.0, 0.0))


def test_transition_errors():
    s = schema_slice(p=({"D"}, {"R"}), half=({"D"}, set()))
    t = table_of(D=(1.0, 0.0), R=(0.0, 1.0))
    with pytest.raises(UnknownIdentifierError):
        transition_distance(t, s, "p")
    with pytest.raises(SchemaError):
        transition_distance(t, s, "nope")
    with pytest.raises(SchemaError, match="range"):
        transition_distance(t, s, "half")


def test_cartesian_product_and_flag():
    s = schema_slice(spouse=({"Person"}, {"Person"}), p=({"A", "B"}, {"C", "A"}))
    t = table_of(Person=(1.0, 1.0), spouse=(0.1, -0.1), A=(1.0, 0.0), B=(0.0, 1.0), C=(1.0, 1.0), p=(0.5, 0.5))
    rows = transition_distances(t, s, "p")
    assert [(r.domain, r.range) for r in rows] == [("A", "A"), ("A", "C"), ("B", "A"), ("B", "C")]
    assert [r.domain_equals_range for r in rows] == [True, False, False, False]
    with pytest.raises(SchemaError, match="pick one"):
        transition_distance(t, s, "p")
    assert transition_distance(t, s, "p", domain="B", range_="C") == rows[3]
    assert transition_distance(t, s, "spouse").domain_equals_range


def test_table_collects_errors_and_matches_single_calls():
    s = schema_slice(a=({"D"}, {"R"}), b=({"R"}, {"D"}), c=({"D"}, {"Q"}))
    t = table_of(D=(1.0, 0.0), R=(0.0, 1.0), a=(0.2, 0.3), b=(0.5, -0.4), c=(1.0, 1.0))
    out = transition_table(t, s, ["a", "b", "c", "zz"])
    assert [r.property for r in out.rows] == ["a", "b"]
    assert [p for p, _ in out.errors] == ["c", "zz"]
    for r in out.rows:
        assert r == transition_distance(t, s, r.property)
    assert transition_table(t, s, []).rows == []


def test_twenty_translational_properties():
    fx = generate(FixtureSpec(n_concepts=10, entities_per_concept=2, dimension=16, translational_properties=20,
                              seed=11, hierarchy_shape="chain"))
    out = transition_table(fx.table, fx.slice, fx.properties)
    assert len(out.rows) == 20 and not out.errors
    for r in out.rows:
        assert abs(r.score - 1.0) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_orthogonal_invariance(seed):
    rng = np.random.default_rng(seed)
    names = ["D", "R", "p", "q"]
    t = table_of(**{n: tuple(rng.normal(size=7)) for n in names})
    s = schema_slice(p=({"D"}, {"R"}), q=({"R"}, {"D"}))
    moved = transformed(t, random_orthogonal(7, seed + 1))
    for prop in ("p", "q"):
        a = transition_distance(t, s, prop).score
        b = transition_distance(moved, s, prop).score
        assert abs(a - b) < 1e-9


def test_brute_force_score():
    rng = np.random.default_rng(8)
    d, p, r = (list(rng.normal(size=9)) for _ in range(3))
    moved = [x + y for x, y in zip(d, p)]
    dot = math.fsum(x * y for x, y in zip(moved, r))
    oracle = dot / math.sqrt(math.fsum(x * x for x in moved)) / math.sqrt(math.fsum(y * y for y in r))
    assert abs(transition_score(d, p, r) - oracle) <= 1e-12


# -- selectional preference -----------------------------------------------------------

def _pref_slice():
    subclass = {"PopulatedPlace": {"Place"}, "City": {"PopulatedPlace"}, "Capital": {"City"},
                "Person": {"Agent"}, "Actor": {"Person"}, "Organisation": {"Agent"},
                "Band": {"Organisation"}, "Work": {"Thing"}, "Film": {"Work"}, "Album": {"Work"}}
    schema = {"capital": PropertySchema(frozenset({"PopulatedPlace"}), frozenset({"City"})),
              "starring": PropertySchema(frozenset({"Film"}), frozenset({"Actor"}))}
    return KnowledgeSlice.build(subclass=subclass, schema=schema)


def test_inventory_positives_and_exclusion():
    s = _pref_slice()
    rows = selectional_preference_inventory(s, ["capital", "starring"], 3, seed=4)
    capital = [r for r in rows if r.property == "capital"]
    assert [(r.concept, r.label) for r in capital[:2]] == [("PopulatedPlace", COMPATIBLE), ("City", COMPATIBLE)]
    negatives = {r.concept for r in capital if r.label == INCOMPATIBLE}
    assert len(negatives) == 3
    assert not negatives & {"PopulatedPlace", "City", "Place", "Capital"}
    starring_neg = {r.concept for r in rows if r.property == "starring" and r.label == INCOMPATIBLE}
    assert not starring_neg & {"Film", "Work", "Thing", "Actor", "Person", "Agent"}


def test_inventory_determinism_and_shortfall():
    s = _pref_slice()
    assert selectional_preference_inventory(s, ["capital"], 4, 1) == selectional_preference_inventory(
        s, ["capital"], 4, 1)
    with pytest.raises(InsufficientDataError):
        selectional_preference_inventory(s, ["capital"], 50, 0)
    with pytest.raises(SchemaError):
        selectional_preference_inventory(s, ["unknown"], 1, 0)


def test_inventory_files_and_accuracy(tmp_path):
    rows = selectional_preference_inventory(_pref_slice(), ["capital", "starring"], 2, seed=0)
    judge, key = tmp_path / "judge.tsv", tmp_path / "key.tsv"
    write_inventory(rows, judge, key, seed=5)
    judge_lines = [l for l in judge.read_text().splitlines() if not l.startswith("#")]
    assert len(judge_lines) == len(rows)
    assert all(l.endswith("\t") for l in judge_lines)
    key_lines = [l.split("\t") for l in key.read_text().splitlines() if not l.startswith("#")]
    # a judge who answers every row "compatible", and one who leaves a row blank
    responses = tmp_path / "resp.tsv"
    responses.write_text("".join(f"{c}\t{p}\t{COMPATIBLE}\n" for c, p, _ in key_lines))
    acc, n = judgment_accuracy(key, responses)
    positives = sum(1 for r in rows if r.label == COMPATIBLE)
    assert (acc, n) == (positives / len(rows), len(rows))
    partial = tmp_path / "partial.tsv"
    partial.write_text("".join(f"{c}\t{p}\t{lab if i else ''}\n" for i, (c, p, lab) in enumerate(key_lines)))
    assert judgment_accuracy(key, partial) == (1.0, len(rows) - 1)
