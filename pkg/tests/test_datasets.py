import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgpath.datasets import (
    DPO_INSTRUCTION, SFT_INSTRUCTION, build_sft_record, count_tokens, dpo_objective, emit_dpo,
    emit_sft, render_answers, sample_rejected, write_jsonl,
)
from kgpath.extract import ExtractionConfig, ReasoningPath, extract_paths, validate_path, verbalize_path
from kgpath.kg import KnowledgeGraph, Query, bind_query
from kgpath.subgraph import IN, OUT, extract_subgraph

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def cardinals():
    kg = KnowledgeGraph.from_triples([("Fredbird", "mascot", "St. Louis Cardinals"),
                                      ("St. Louis Cardinals", "stadium", "Busch Stadium")])
    q = Query("q1", "what is the mascot of St. Louis Cardinals", ("St. Louis Cardinals",), ("Fredbird",))
    sg = extract_subgraph(kg, bind_query(kg, q), 3)
    c, f = kg.entity_id("St. Louis Cardinals"), kg.entity_id("Fredbird")
    path = ReasoningPath(c, ((c, kg.relation_id("mascot"), IN, f),), (0.9,))
    return kg, q, sg, path


def test_template_constants_are_verbatim():
    assert SFT_INSTRUCTION.startswith("Based on the reasoning paths, please answer the given question.")
    assert "please generate coherent reasoning paths that can support answering it" in DPO_INSTRUCTION


def test_sft_golden(cardinals):
    kg, q, _, path = cardinals
    rec = build_sft_record(q, [path], kg)
    assert rec.prompt.encode("utf-8") == (GOLDEN / "sft_prompt.txt").read_bytes()
    assert rec.completion == '["Fredbird"]'
    assert rec.token_count == 47 and rec.flags == []


def test_sft_empty_paths_flagged():
    kg = KnowledgeGraph.from_triples([("a", "r", "b")])
    q = Query("q2", "who is nobody", ("a",), ("b",))
    rec = build_sft_record(q, [], kg)
    assert rec.prompt.encode("utf-8") == (GOLDEN / "sft_empty_prompt.txt").read_bytes()
    assert rec.flags == ["no_paths"]


def test_dpo_golden(cardinals):
    kg, q, sg, path = cardinals
    # the only other one-hop walk from the topic is the stadium edge
    pairs, skipped = emit_dpo([q], {"q1": [path]}, {"q1": sg}, kg, seed=3)
    assert skipped == 0
    (pair,) = pairs
    assert pair.prompt.encode("utf-8") == (GOLDEN / "dpo_prompt.txt").read_bytes()
    assert pair.chosen == "St. Louis Cardinals -> mascot^-1 -> Fredbird"
    assert pair.rejected == "St. Louis Cardinals -> stadium -> Busch Stadium"


def test_dpo_skips_when_walks_exhausted(cardinals):
    kg, q, sg, path = cardinals
    c, b = kg.entity_id("St. Louis Cardinals"), kg.entity_id("Busch Stadium")
    other = ReasoningPath(c, ((c, kg.relation_id("stadium"), OUT, b),), (0.5,))
    pairs, skipped = emit_dpo([q], {"q1": [path, other]}, {"q1": sg}, kg)
    assert pairs == [] and skipped == 1
    pairs, skipped = emit_dpo([q], {"q1": []}, {"q1": sg}, kg)
    assert pairs == [] and skipped == 1


def test_dpo_pairs_are_disjoint_valid_and_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    triples = sorted({(f"e{a}", f"r{rng.integers(3)}", f"e{b}") for a, b in rng.integers(12, size=(30, 2))})
    kg = KnowledgeGraph.from_triples(triples)
    queries, paths, sgs = [], {}, {}
    for i in range(5):
        q = Query(f"q{i}", "what", (kg.entities[i],), ())
        sg = extract_subgraph(kg, bind_query(kg, q), 3)
        paths[q.id] = extract_paths(kg, sg, ExtractionConfig(K=2, T=2), scores=rng.random(sg.num_nodes))
        sgs[q.id] = sg
        queries.append(q)
    a, _ = emit_dpo(queries, paths, sgs, kg, seed=1)
    b, _ = emit_dpo(list(reversed(queries)), paths, sgs, kg, seed=1)
    assert {p.query_id: p for p in a} == {p.query_id: p for p in b}
    write_jsonl(tmp_path / "a.jsonl", a)
    write_jsonl(tmp_path / "b.jsonl", emit_dpo(queries, paths, sgs, kg, seed=1)[0])
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    for pair in a:
        chosen, rejected = set(pair.chosen.split("\n")), pair.rejected.split("\n")
        assert not chosen & set(rejected)
        assert len(rejected) == len(paths[pair.query_id])
    for qid, pp in paths.items():
        rej = sample_rejected(sgs[qid], pp, len(pp), np.random.default_rng(2)) if pp else None
        for p in rej or ():
            validate_path(p, sgs[qid], kg)
        if rej:
            assert sorted(p.length for p in rej) == sorted(p.length for p in pp)


def test_budget_truncation_drops_lowest_scores(cardinals):
    kg, q, _, _ = cardinals
    c, f, b = (kg.entity_id(x) for x in ("St. Louis Cardinals", "Fredbird", "Busch Stadium"))
    good = ReasoningPath(c, ((c, kg.relation_id("mascot"), IN, f),), (0.9,))
    weak = ReasoningPath(c, ((c, kg.relation_id("stadium"), OUT, b),), (0.2,))
    full = build_sft_record(q, [good, weak], kg)
    budget = full.token_count - 1
    rec = build_sft_record(q, [good, weak], kg, budget=budget)
    assert rec.flags == ["truncated"] and rec.token_count <= budget
    assert verbalize_path(good, kg) in rec.prompt and verbalize_path(weak, kg) not in rec.prompt
    tiny = build_sft_record(q, [good, weak], kg, budget=5)
    assert tiny.flags == ["truncated", "over_budget"]


def test_prompt_contains_each_path_once(cardinals):
    kg, q, _, path = cardinals
    rec = build_sft_record(q, [path, path], kg)
    assert rec.prompt.count(verbalize_path(path, kg)) == 1


def test_emit_sft_missing_entry(cardinals, caplog):
    kg, q, _, _ = cardinals
    (rec,) = emit_sft([q], {}, kg)
    assert rec.flags == ["no_paths"] and "no paths entry" in caplog.text


def test_custom_tokenizer(cardinals):
    kg, q, _, path = cardinals
    rec = build_sft_record(q, [path], kg, tokenizer=list)
    assert rec.token_count == len(rec.prompt)


def test_count_tokens():
    assert count_tokens("a b  c") == 3
    assert count_tokens("") == 0


def test_render_answers():
    assert render_answers(["b", "a", "b", "Zoë"]) == '["Zoë", "a", "b"]'


def test_dpo_objective_values():
    assert dpo_objective(0.0, 0.0, 0.0, 0.0, 0.1) == pytest.approx(math.log(2), abs=1e-12)
    assert dpo_objective(1.0, 0.0, 0.0, 0.0, 1.0) == pytest.approx(0.313262, abs=1e-6)
    with pytest.raises(ValueError):
        dpo_objective(0, 0, 0, 0, 0.0)


@settings(max_examples=200)
@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(1e-3, 10))
def test_dpo_objective_equal_ratios(x, y, beta):
    assert abs(dpo_objective(x, x, y, y, beta) - math.log(2)) <= 1e-12


@settings(max_examples=200)
@given(st.floats(-50, 50), st.floats(0.01, 5), st.floats(-5, 5), st.floats(0.01, 2))
def test_dpo_objective_decreasing_in_preferred_logp(w, gap, other, beta):
    assert dpo_objective(w + gap, other, 0.0, 0.0, beta) < dpo_objective(w, other, 0.0, 0.0, beta)
