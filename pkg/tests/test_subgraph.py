import json

import pytest
from hypothesis import given, settings, strategies as st

from kgpath.kg import KnowledgeGraph
from kgpath.subgraph import IN, OUT, bfs_hops, extract_subgraph, subgraph_stats

from conftest import bound


def label_triples(kg, sg):
    return {(kg.entities[h], kg.relations[r], kg.entities[t]) for h, r, t in sg.triples.tolist()}


def test_one_hop(small_kg):
    sg = extract_subgraph(small_kg, bound(small_kg, ["A"]), 1)
    assert {small_kg.entities[e] for e in sg.node_ids} == {"A", "B", "D"}
    assert label_triples(small_kg, sg) == {("A", "r1", "B"), ("D", "r3", "A")}
    assert subgraph_stats(sg) == {"node_count": 3, "triple_count": 2, "relation_count": 2, "max_hop": 1}


def test_two_hop(small_kg):
    sg = extract_subgraph(small_kg, bound(small_kg, ["A"]), 2)
    assert len(sg.node_ids) == 4 and len(sg.triples) == 3
    assert subgraph_stats(sg) == {"node_count": 4, "triple_count": 3, "relation_count": 3, "max_hop": 2}


def test_isolated_topic(caplog):
    kg = KnowledgeGraph(["A", "B", "C"], ["r"], [[0, 0, 1]])
    sg = extract_subgraph(kg, bound(kg, ["C"]), 3)
    assert subgraph_stats(sg) == {"node_count": 1, "triple_count": 0, "relation_count": 0, "max_hop": 0}
    assert "no incident edges" in caplog.text


def test_k_must_be_positive(small_kg):
    with pytest.raises(ValueError):
        extract_subgraph(small_kg, bound(small_kg, ["A"]), 0)


def test_directed_mode(small_kg):
    sg = extract_subgraph(small_kg, bound(small_kg, ["A"]), 2, directed=True)
    assert {small_kg.entities[e] for e in sg.node_ids} == {"A", "B", "C"}


def test_node_cap_keeps_topics_then_hop_order():
    kg = KnowledgeGraph.from_triples([("T", "r", f"n{i}") for i in range(5)] + [("n0", "r", "far")])
    sg = extract_subgraph(kg, bound(kg, ["T"]), 2, max_nodes=3)
    kept = {kg.entities[e] for e in sg.node_ids}
    assert "T" in kept and "far" not in kept and len(kept) == 3


def test_traversal_edges_tags(small_kg):
    sg = extract_subgraph(small_kg, bound(small_kg, ["A"]), 2)
    e = sg.traversal_edges()
    assert len(e) == 2 * len(sg.triples)
    assert (e.direction[:len(sg.triples)] == OUT).all() and (e.direction[len(sg.triples):] == IN).all()
    assert len(sg.traversal_edges(directed=True)) == len(sg.triples)


def test_dump(tmp_path, small_kg):
    sg = extract_subgraph(small_kg, bound(small_kg, ["A"]), 1)
    sg.dump(tmp_path / "sg.json", small_kg)
    obj = json.loads((tmp_path / "sg.json").read_text())
    assert obj["topics"] == ["A"] and obj["hop_of"]["A"] == 0


@st.composite
def graphs(draw):
    n = draw(st.integers(2, 12))
    rows = draw(st.lists(st.tuples(st.integers(0, n - 1), st.sampled_from("rst"), st.integers(0, n - 1)),
                         min_size=1, max_size=30))
    kg = KnowledgeGraph.from_triples([(f"e{h}", r, f"e{t}") for h, r, t in rows])
    topics = draw(st.lists(st.sampled_from(kg.entities), min_size=1, max_size=3, unique=True))
    return kg, topics


@settings(max_examples=80, deadline=None)
@given(graphs(), st.integers(1, 3))
def test_subgraph_properties(g, k):
    kg, topics = g
    bq = bound(kg, topics)
    sg = extract_subgraph(kg, bq, k)
    nodes = set(sg.node_ids)
    assert set(bq.topic_ids) <= nodes
    assert all(h <= k for h in sg.hop_of.values())
    # induced closure and membership in the parent KG
    inside = {tuple(t) for t in kg.triples.tolist() if t[0] in nodes and t[2] in nodes}
    assert {tuple(t) for t in sg.triples.tolist()} == inside
    # multi-source hop equals min over single-source BFS
    singles = [bfs_hops(kg, [t], k) for t in bq.topic_ids]
    for e in nodes:
        assert sg.hop_of[e] == min(s[e] for s in singles if e in s)
    assert nodes == set().union(*[set(s) for s in singles])
    # monotone in k
    bigger = extract_subgraph(kg, bq, k + 1)
    assert nodes <= set(bigger.node_ids)
    assert {tuple(t) for t in sg.triples.tolist()} <= {tuple(t) for t in bigger.triples.tolist()}
