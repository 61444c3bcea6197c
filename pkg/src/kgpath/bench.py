"""Seeded synthetic KBQA benchmarks with one planted relation chain per query.

Each query asks for the entity reached from its topic by following a short
sequence of named relations, e.g. ``what is the coach of the rival of e017``.
The chain is planted into a random background graph; optional distractor
edges reuse chain relations on dead-end branches so that relation names
alone do not identify the answer.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .kg import KnowledgeGraph, Query, write_queries

# Ordered so that the first 12 names and the question's function words fall
# into distinct hashed-bag-of-words buckets at the default width of 32.
RELATION_NAMES = (
    "member", "sponsor", "genre", "author", "stadium", "mentor", "spouse", "mascot",
    "director", "capital", "composer", "coach", "founder", "rival", "owner", "editor",
)


class BenchSpecError(ValueError):
    pass


@dataclass
class SyntheticBenchSpec:
    n_queries: int = 200
    kg_size: int = 300
    chain_length: tuple[int, int] = (2, 3)   # inclusive range
    distractor_edge_ratio: float = 0.25      # distractor edges per chain edge
    background_degree: float = 0.25          # mean undirected degree of the background graph
    n_relations: int = 8
    holdout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.chain_length = tuple(self.chain_length)
        lo, hi = self.chain_length
        if not 1 <= lo <= hi:
            raise BenchSpecError(f"bad chain length range {self.chain_length}")
        if hi + 1 > self.kg_size:
            raise BenchSpecError(f"chain of length {hi} needs {hi + 1} distinct entities, "
                                 f"kg_size is {self.kg_size}")
        if not 2 <= self.n_relations <= len(RELATION_NAMES):
            raise BenchSpecError(f"n_relations must lie in [2, {len(RELATION_NAMES)}]")
        if self.distractor_edge_ratio < 0:
            raise BenchSpecError("distractor_edge_ratio must be >= 0")
        if self.n_queries < 1:
            raise BenchSpecError("n_queries must be >= 1")


@dataclass
class Benchmark:
    spec: SyntheticBenchSpec
    triples: list[tuple[str, str, str]]
    queries: list[Query]
    gold_paths: list[dict]

    def kg(self) -> KnowledgeGraph:
        return KnowledgeGraph.from_triples(self.triples)

    def split(self) -> tuple[list[Query], list[Query]]:
        train = [q for q in self.queries if q.meta.get("split") == "train"]
        test = [q for q in self.queries if q.meta.get("split") == "test"]
        return train, test

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"kg": out / "kg.tsv", "queries": out / "queries.jsonl",
                 "gold": out / "gold_paths.jsonl", "spec": out / "bench_spec.json"}
        KnowledgeGraph.from_triples(self.triples).to_tsv(paths["kg"])
        write_queries(paths["queries"], self.queries)
        with paths["gold"].open("w", encoding="utf-8") as fh:
            for g in self.gold_paths:
                fh.write(json.dumps(g, sort_keys=True) + "\n")
        paths["spec"].write_text(json.dumps(asdict(self.spec), sort_keys=True, indent=1) + "\n")
        return paths


def _entity(i: int, width: int) -> str:
    return f"e{i:0{width}d}"


def _question(topic: str, rels: list[str]) -> str:
    inner = " of the ".join(reversed(rels))
    return f"what is the {inner} of {topic}"


def _follow(out_edges: dict, start: str, rels: list[str]) -> set[str]:
    frontier = {start}
    for r in rels:
        frontier = {t for e in frontier for t in out_edges.get((e, r), ())}
    return frontier


def generate_bench(spec: SyntheticBenchSpec) -> Benchmark:
    rng = np.random.default_rng(spec.seed)
    n = spec.kg_size
    width = len(str(n - 1))
    names = [_entity(i, width) for i in range(n)]
    rels = list(RELATION_NAMES[:spec.n_relations])
    triples: list[tuple[str, str, str]] = []

    n_bg = int(round(spec.background_degree * n / 2))
    for _ in range(n_bg):
        h, t = rng.choice(n, size=2, replace=False)
        triples.append((names[h], rels[rng.integers(len(rels))], names[t]))

    lo, hi = spec.chain_length
    plans = []
    for i in range(spec.n_queries):
        length = int(rng.integers(lo, hi + 1))
        nodes = rng.choice(n, size=length + 1, replace=False)
        chain_rels = [rels[j] for j in rng.choice(len(rels), size=length, replace=len(rels) < length)]
        chain = [names[j] for j in nodes]
        for j in range(length):
            triples.append((chain[j], chain_rels[j], chain[j + 1]))
        for _ in range(int(round(spec.distractor_edge_ratio * length))):
            pos = int(rng.integers(length))
            if pos < length - 1:
                r = chain_rels[pos]
            else:
                r = rels[rng.integers(len(rels))]
                while r == chain_rels[-1]:
                    r = rels[rng.integers(len(rels))]
            target = names[rng.integers(n)]
            while target in chain:
                target = names[rng.integers(n)]
            triples.append((chain[pos], r, target))
        plans.append((chain, chain_rels))

    triples = sorted(set(triples))
    out_edges: dict[tuple[str, str], list[str]] = {}
    for h, r, t in triples:
        out_edges.setdefault((h, r), []).append(t)

    n_test = int(round(spec.holdout_fraction * spec.n_queries))
    queries, gold = [], []
    for i, (chain, chain_rels) in enumerate(plans):
        qid = f"q{i:04d}"
        answers = sorted(_follow(out_edges, chain[0], chain_rels))
        split = "test" if i >= spec.n_queries - n_test else "train"
        queries.append(Query(
            id=qid, question=_question(chain[0], chain_rels), topic_entities=(chain[0],),
            answers=tuple(answers),
            meta={"hops": len(chain_rels), "split": split,
                  "gold_path": {"entities": chain, "relations": chain_rels}},
        ))
        gold.append({"query_id": qid, "entities": chain, "relations": chain_rels,
                     "directions": ["out"] * len(chain_rels)})
    return Benchmark(spec, triples, queries, gold)


# Model and training settings used with the default benchmark by the
# pipeline command and the acceptance suite.
BENCH_RECIPE = {
    "dim": 32, "layers": 3, "agg": "mean", "max_walk": 3, "freeze_entities": True,
    "epochs": 30, "learning_rate": 3e-3, "batch_size": 8, "beta2": 0.999, "prior_bias": True,
    "top_k": 3, "iters": 3,
}
