import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from kgpath.extract import (
    ExtractionConfig, ReasoningPath, contains_chain, extract_paths, random_paths, read_paths,
    shortest_paths, terminal_frequencies, validate_path, verbalize_path, write_paths,
)
from kgpath.kg import KnowledgeGraph
from kgpath.subgraph import IN, OUT, extract_subgraph

from conftest import bound
from oracles import enumerate_walks, random_kg


def sg_of(kg, topics, k=10):
    return extract_subgraph(kg, bound(kg, topics), k)


def scores_for(kg, sg, table, default=0.0):
    return np.array([table.get(kg.entities[e], default) for e in sg.node_ids])


def test_chain_example_single_path():
    kg = KnowledgeGraph.from_triples([("A", "r1", "B"), ("B", "r2", "C")])
    sg = sg_of(kg, ["A"])
    s = scores_for(kg, sg, {"A": 0.1, "B": 0.8, "C": 0.9})
    paths = extract_paths(kg, sg, ExtractionConfig(K=1, T=2), scores=s)
    assert [verbalize_path(p, kg) for p in paths] == ["A -> r1 -> B -> r2 -> C"]
    assert paths[0].scores == (0.8, 0.9)


def test_topic_without_edges(caplog):
    kg = KnowledgeGraph(["A", "B"], ["r"], np.zeros((0, 3), dtype=np.int64))
    sg = sg_of(kg, ["A"])
    assert extract_paths(kg, sg, ExtractionConfig(), scores=np.zeros(1)) == []
    assert "no paths" in caplog.text
    assert random_paths(sg, ExtractionConfig(strategy="random")) == []


def test_priority_needs_model_or_scores(small_kg):
    with pytest.raises(ValueError):
        extract_paths(small_kg, sg_of(small_kg, ["A"]), ExtractionConfig())


def test_dead_end_paths_are_emitted():
    # B is kept at depth 1 but is nobody's best parent at depth 2
    kg = KnowledgeGraph.from_triples([("A", "r", "C"), ("C", "r", "D"), ("A", "s", "B")])
    sg = sg_of(kg, ["A"])
    s = scores_for(kg, sg, {"C": 0.9, "D": 0.8, "B": 0.1, "A": 0.0})
    paths = extract_paths(kg, sg, ExtractionConfig(K=2, T=2), scores=s)
    texts = {verbalize_path(p, kg) for p in paths}
    assert "A -> s -> B" in texts  # kept at depth 1, no kept child at depth 2
    assert "A -> r -> C -> r -> D" in texts


def exhaustive_frontiers(sg, T):
    e = sg.traversal_edges()
    walks = enumerate_walks(sg.num_nodes, e.src.tolist(), e.dst.tolist(), sorted(set(sg.topic_local)), T)
    return walks, e


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 8), st.integers(1, 12), st.integers(1, 3))
def test_unbounded_k_equals_exhaustive_frontier(seed, n, m, T):
    rng = np.random.default_rng(seed)
    kg = random_kg(rng, n, m)
    sg = sg_of(kg, [kg.entities[0]])
    s = rng.random(sg.num_nodes)
    walks, e = exhaustive_frontiers(sg, T)
    ids = sg.node_ids
    full_walks = {tuple((ids[e.src[j]], int(e.rel[j]), int(e.direction[j]), ids[e.dst[j]]) for j in w)
                  for w in walks if len(w) == T}
    got = extract_paths(kg, sg, ExtractionConfig(K=10**6, T=T, all_parents=True), scores=s)
    assert {p.steps for p in got} == full_walks
    # with single backpointers the terminal set is still the whole depth-T frontier
    single = extract_paths(kg, sg, ExtractionConfig(K=10**6, T=T), scores=s)
    assert {p.terminal for p in single if p.length == T} == {w[-1][3] for w in full_walks}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 12), st.integers(1, 25),
       st.integers(1, 4), st.integers(1, 4))
def test_emitted_paths_are_valid(seed, n, m, K, T):
    rng = np.random.default_rng(seed)
    kg = random_kg(rng, n, m)
    topics = sorted({kg.entities[i] for i in rng.integers(kg.num_entities, size=2)})
    sg = sg_of(kg, topics, 3)
    s = rng.random(sg.num_nodes)
    paths = extract_paths(kg, sg, ExtractionConfig(K=K, T=T), scores=s)
    assert len(paths) <= K * T
    for p in paths:
        validate_path(p, sg, kg, T)
    for d in range(1, T + 1):
        assert len({p.entities[d] for p in paths if p.length >= d}) <= K
    assert paths == extract_paths(kg, sg, ExtractionConfig(K=K, T=T), scores=s)
    assert [p.terminal_score for p in paths] == sorted((p.terminal_score for p in paths), reverse=True)
    for p in random_paths(sg, ExtractionConfig(K=K, T=T, strategy="random", seed=seed)):
        validate_path(p, sg, kg, T)


def test_tie_break_prefers_smaller_id():
    kg = KnowledgeGraph.from_triples([("A", "r", "B"), ("A", "r", "C")])
    sg = sg_of(kg, ["A"])
    paths = extract_paths(kg, sg, ExtractionConfig(K=1, T=1), scores=np.full(3, 0.5))
    assert [verbalize_path(p, kg) for p in paths] == ["A -> r -> B"]


def test_random_paths_determinism(small_kg):
    sg = sg_of(small_kg, ["A"])
    cfg = ExtractionConfig(K=3, T=3, strategy="random", seed=4)
    assert random_paths(sg, cfg) == random_paths(sg, cfg)
    assert all(p.scores == () for p in random_paths(sg, cfg))


def test_random_steps_uniform_on_cycle():
    # 6-cycle, every node has exactly two neighbours
    kg = KnowledgeGraph.from_triples([(f"n{i}", "r", f"n{(i + 1) % 6}") for i in range(6)])
    sg = sg_of(kg, ["n0"])
    forward = 0
    for seed in range(100):
        (p,) = random_paths(sg, ExtractionConfig(K=1, T=1, strategy="random", seed=seed))
        forward += p.steps[0][2] == OUT
    assert abs(forward - 50) <= 3 * 5
    assert stats.chisquare([forward, 100 - forward]).pvalue > 0.001


def test_shortest_paths():
    kg = KnowledgeGraph.from_triples([("A", "r", "B"), ("B", "r", "D"), ("A", "s", "C"), ("C", "s", "D"),
                                      ("X", "r", "Y")])
    sg = sg_of(kg, ["A"])
    paths = shortest_paths(sg, [kg.entity_id("D")])
    assert sorted(verbalize_path(p, kg) for p in paths) == ["A -> r -> B -> r -> D", "A -> s -> C -> s -> D"]
    (zero,) = shortest_paths(sg, [kg.entity_id("A")])
    assert zero.length == 0 and verbalize_path(zero, kg) == "A"
    with pytest.raises(ValueError):
        shortest_paths(sg, [])


def test_shortest_unreachable(caplog):
    kg = KnowledgeGraph.from_triples([("A", "r", "B"), ("X", "r", "Y")])
    assert shortest_paths(sg_of(kg, ["A"]), [kg.entity_id("Y")]) == []
    assert "no target reachable" in caplog.text


def test_shortest_cap():
    # 12 parallel two-hop routes A - m_i - Z
    kg = KnowledgeGraph.from_triples([t for i in range(12) for t in (("A", "r", f"m{i}"), (f"m{i}", "r", "Z"))])
    assert len(shortest_paths(sg_of(kg, ["A"]), [kg.entity_id("Z")])) == 10


def test_verbalize():
    kg = KnowledgeGraph.from_triples([("Fredbird", "mascot", "St. Louis Cardinals"), ("A", "r", "B")])
    f, c = kg.entity_id("Fredbird"), kg.entity_id("St. Louis Cardinals")
    r = kg.relation_id("mascot")
    assert verbalize_path(ReasoningPath(f, ((f, r, OUT, c),)), kg) == "Fredbird -> mascot -> St. Louis Cardinals"
    a, b, rr = kg.entity_id("A"), kg.entity_id("B"), kg.relation_id("r")
    assert verbalize_path(ReasoningPath(b, ((b, rr, IN, a),)), kg) == "B -> r^-1 -> A"
    assert verbalize_path(ReasoningPath(a), kg) == "A"


def test_validate_path_rejects(small_kg):
    sg = sg_of(small_kg, ["A"])
    A, B, C = (small_kg.entity_id(x) for x in "ABC")
    r1, r2 = small_kg.relation_id("r1"), small_kg.relation_id("r2")
    with pytest.raises(ValueError, match="topic"):
        validate_path(ReasoningPath(B, ((B, r2, OUT, C),)), sg, small_kg)
    with pytest.raises(ValueError, match="chain"):
        validate_path(ReasoningPath(A, ((A, r1, OUT, B), (A, r1, OUT, B))), sg, small_kg)
    with pytest.raises(ValueError, match="not in subgraph"):
        validate_path(ReasoningPath(A, ((A, r2, OUT, B),)), sg, small_kg)
    with pytest.raises(ValueError, match="exceeds"):
        validate_path(ReasoningPath(A, ((A, r1, OUT, B), (B, r2, OUT, C))), sg, small_kg, 1)


def test_paths_file_roundtrip(tmp_path, small_kg):
    sg = sg_of(small_kg, ["A"])
    paths = extract_paths(small_kg, sg, ExtractionConfig(K=2, T=2), scores=np.linspace(0.1, 0.9, sg.num_nodes))
    write_paths(tmp_path / "p.jsonl", [("q", "priority", paths)], small_kg)
    strategy, back = read_paths(tmp_path / "p.jsonl", small_kg)["q"]
    assert strategy == "priority" and back == paths


def test_contains_chain_and_frequencies(small_kg):
    A, B, C = (small_kg.entity_id(x) for x in "ABC")
    r1, r2 = small_kg.relation_id("r1"), small_kg.relation_id("r2")
    long = ReasoningPath(A, ((A, r1, OUT, B), (B, r2, OUT, C)))
    assert contains_chain([long], [(A, r1, OUT, B)])
    assert not contains_chain([long], [(A, r1, OUT, B), (B, r2, OUT, A)])
    assert terminal_frequencies([long, long, ReasoningPath(A)]) == {C: 2, A: 1}


def test_config_validation():
    with pytest.raises(ValueError):
        ExtractionConfig(K=0)
    with pytest.raises(ValueError):
        ExtractionConfig(strategy="beam")
