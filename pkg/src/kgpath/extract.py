"""Reasoning-path extraction: priority-guided top-K expansion and baselines."""

from __future__ import annotations

import json
import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .kg import KnowledgeGraph
from .subgraph import IN, OUT, QuerySubgraph

log = logging.getLogger(__name__)

STRATEGIES = ("priority", "random", "shortest")
_DIR_NAME = {OUT: "out", IN: "in"}
_DIR_CODE = {"out": OUT, "in": IN}


@dataclass(frozen=True)
class ReasoningPath:
    """Walk from a topic entity. Each step is ``(head, relation, direction, tail)``
    in global ids; ``direction`` is OUT when the stored triple is
    ``(head, relation, tail)`` and IN when it is ``(tail, relation, head)``."""

    start: int
    steps: tuple[tuple[int, int, int, int], ...] = ()
    scores: tuple[float, ...] = ()

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def terminal(self) -> int:
        return self.steps[-1][3] if self.steps else self.start

    @property
    def entities(self) -> list[int]:
        return [self.start] + [s[3] for s in self.steps]

    @property
    def terminal_score(self) -> float:
        return self.scores[-1] if self.scores else float("nan")

    def key(self) -> tuple:
        return (self.start, self.steps)

    def triples(self) -> list[tuple[int, int, int]]:
        return [(h, r, t) if d == OUT else (t, r, h) for h, r, d, t in self.steps]

    def to_dict(self, kg: KnowledgeGraph) -> dict:
        return {
            "entities": [kg.entities[e] for e in self.entities],
            "relations": [kg.relations[s[1]] for s in self.steps],
            "directions": [_DIR_NAME[s[2]] for s in self.steps],
            "scores": [float(x) for x in self.scores],
        }

    @classmethod
    def from_dict(cls, obj: dict, kg: KnowledgeGraph) -> "ReasoningPath":
        ents = [kg.entity_id(e) for e in obj["entities"]]
        rels = [kg.relation_id(r) for r in obj["relations"]]
        dirs = [_DIR_CODE[d] for d in obj.get("directions", ["out"] * len(rels))]
        if len(ents) != len(rels) + 1 or len(dirs) != len(rels):
            raise ValueError("path entities/relations/directions lengths disagree")
        steps = tuple((ents[i], rels[i], dirs[i], ents[i + 1]) for i in range(len(rels)))
        return cls(ents[0], steps, tuple(float(x) for x in obj.get("scores", ())))


@dataclass
class ExtractionConfig:
    K: int = 3
    T: int = 2
    strategy: str = "priority"
    seed: int = 0
    all_parents: bool = False   # keep every kept parent of a kept entity, not just the best

    def __post_init__(self):
        if self.K < 1 or self.T < 1:
            raise ValueError("K and T must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


def validate_path(p: ReasoningPath, sg: QuerySubgraph, kg: KnowledgeGraph, max_len: int | None = None) -> None:
    """Raise ValueError unless ``p`` chains, starts at a topic and uses triples of ``sg``."""
    if p.start not in sg.topic_ids:
        raise ValueError(f"path starts at {p.start}, not a topic entity")
    if max_len is not None and p.length > max_len:
        raise ValueError(f"path length {p.length} exceeds {max_len}")
    present = {tuple(t) for t in sg.triples.tolist()}
    prev = p.start
    for (h, r, d, t), tri in zip(p.steps, p.triples()):
        if h != prev:
            raise ValueError("consecutive steps do not chain")
        if tri not in present:
            raise ValueError(f"step {kg.entities[h]} -{kg.relations[r]}-> {kg.entities[t]} not in subgraph")
        prev = t


def _adjacency(sg: QuerySubgraph) -> list[list[tuple[int, int, int]]]:
    """Per local node: sorted (local dst, relation id, direction) extensions, undirected."""
    e = sg.traversal_edges(directed=False)
    adj: list[list[tuple[int, int, int]]] = [[] for _ in range(sg.num_nodes)]
    for s, t, r, d in zip(e.src.tolist(), e.dst.tolist(), e.rel.tolist(), e.direction.tolist()):
        adj[s].append((t, r, d))
    for a in adj:
        a.sort()
    return adj


def extract_paths(kg: KnowledgeGraph, sg: QuerySubgraph, cfg: ExtractionConfig, model=None,
                  question: str = "", query_id: str | None = None,
                  scores: np.ndarray | None = None, targets: Iterable[int] = ()) -> list[ReasoningPath]:
    """Paths for one query under ``cfg.strategy``.

    For the priority strategy, ``scores`` (aligned to ``sg.node_ids``) may be
    given directly instead of a trained model.
    """
    if cfg.strategy == "random":
        return random_paths(sg, cfg)
    if cfg.strategy == "shortest":
        return shortest_paths(sg, targets)
    if scores is None:
        if model is None:
            raise ValueError("priority strategy needs a trained model or precomputed scores")
        scores = model.scores(kg, sg, question, query_id)
    return _priority_search(sg, np.asarray(scores, dtype=np.float64), cfg)


def _priority_search(sg: QuerySubgraph, s: np.ndarray, cfg: ExtractionConfig) -> list[ReasoningPath]:
    adj = _adjacency(sg)
    ids = sg.node_ids
    frontier = sorted(set(sg.topic_local))
    if not any(adj[i] for i in frontier):
        log.warning("topic entities have no edges in the subgraph; no paths")
        return []

    # back[t][node] -> list of (parent local, rel, dir); depth 0 are the topics
    back: list[dict[int, list[tuple[int, int, int]]]] = [{i: [] for i in frontier}]
    for _ in range(cfg.T):
        best: dict[int, tuple] = {}
        parents: dict[int, list] = {}
        for p in frontier:
            for c, r, d in adj[p]:
                cand = (-s[p], ids[p], r, d, p)
                parents.setdefault(c, []).append((p, r, d))
                if c not in best or cand < best[c]:
                    best[c] = cand
        if not best:
            break
        ranked = sorted(best, key=lambda c: (-s[c], best[c][0], ids[c]))[:cfg.K]
        layer = {}
        for c in ranked:
            _, _, r, d, p = best[c]
            bp = (p, r, d)
            layer[c] = sorted(set(parents[c]), key=lambda x: (-s[x[0]], ids[x[0]], x[1], x[2])) \
                if cfg.all_parents else [bp]
        back.append(layer)
        frontier = ranked

    def walks(depth: int, node: int) -> list[list[tuple[int, int, int, int]]]:
        if depth == 0:
            return [[]]
        out = []
        for p, r, d in back[depth][node]:
            for w in walks(depth - 1, p):
                out.append(w + [(p, r, d, node)])
        return out

    paths = []
    depth_max = len(back) - 1
    for depth in range(1, depth_max + 1):
        used = set() if depth == depth_max else \
            {p for ps in back[depth + 1].values() for p, _, _ in ps}
        for node in back[depth]:
            if node in used:
                continue
            for w in walks(depth, node):
                steps = tuple((ids[a], r, d, ids[b]) for a, r, d, b in w)
                paths.append(ReasoningPath(ids[w[0][0]], steps, tuple(float(s[b]) for _, _, _, b in w)))
    paths.sort(key=lambda p: (-p.terminal_score, p.length, p.terminal, p.key()))
    return paths


def random_paths(sg: QuerySubgraph, cfg: ExtractionConfig) -> list[ReasoningPath]:
    """``K`` seeded uniform random walks for each length ``1..T`` from random
    topic entities; walks stop early at dead ends; duplicates removed."""
    rng = np.random.default_rng(cfg.seed)
    adj = _adjacency(sg)
    ids = sg.node_ids
    topics = sorted(set(sg.topic_local))
    if not any(adj[i] for i in topics):
        return []
    seen, out = set(), []
    for length in range(1, cfg.T + 1):
        for _ in range(cfg.K):
            cur = topics[int(rng.integers(len(topics)))]
            start, steps = ids[cur], []
            for _ in range(length):
                if not adj[cur]:
                    break
                nxt, r, d = adj[cur][int(rng.integers(len(adj[cur])))]
                steps.append((ids[cur], r, d, ids[nxt]))
                cur = nxt
            p = ReasoningPath(start, tuple(steps))
            if steps and p.key() not in seen:
                seen.add(p.key())
                out.append(p)
    return out


def shortest_paths(sg: QuerySubgraph, targets: Iterable[int], cap: int = 10) -> list[ReasoningPath]:
    """All minimum-hop undirected paths from the topic set to each reachable
    target (global ids), at most ``cap`` per target in lexicographic order."""
    targets = sorted(set(int(t) for t in targets))
    if not targets:
        raise ValueError("shortest_paths needs at least one target")
    adj = _adjacency(sg)
    ids = sg.node_ids
    dist = {i: 0 for i in sg.topic_local}
    parents: dict[int, list[tuple[int, int, int]]] = {i: [] for i in dist}
    queue = deque(sorted(dist))
    while queue:
        u = queue.popleft()
        for v, r, d in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                parents[v] = []
                queue.append(v)
            if dist[v] == dist[u] + 1:
                parents[v].append((u, r, d))

    def enum(v: int, limit: int) -> list[list]:
        if dist[v] == 0:
            return [[]]
        out = []
        for u, r, d in sorted(parents[v], key=lambda x: (ids[x[0]], x[1], x[2])):
            for w in enum(u, limit - len(out)):
                out.append(w + [(ids[u], r, d, ids[v])])
                if len(out) >= limit:
                    return out
        return out

    paths = []
    for t in targets:
        if t not in sg.local or sg.local[t] not in dist:
            continue
        v = sg.local[t]
        for w in enum(v, cap):
            start = w[0][0] if w else ids[v]
            paths.append(ReasoningPath(start, tuple(w)))
    if not paths:
        log.warning("no target reachable from the topic entities")
    return paths


def verbalize_path(p: ReasoningPath, kg: KnowledgeGraph) -> str:
    parts = [kg.entities[p.start]]
    for _, r, d, t in p.steps:
        parts.append(kg.relations[r] + ("^-1" if d == IN else ""))
        parts.append(kg.entities[t])
    return " -> ".join(parts)


def write_paths(path: str | Path, records: Sequence[tuple[str, str, Sequence[ReasoningPath]]],
                kg: KnowledgeGraph) -> None:
    """Write ``(query_id, strategy, paths)`` records as JSONL."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for qid, strategy, paths in records:
            obj = {"query_id": qid, "strategy": strategy, "paths": [p.to_dict(kg) for p in paths]}
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_paths(path: str | Path, kg: KnowledgeGraph) -> dict[str, tuple[str, list[ReasoningPath]]]:
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out[obj["query_id"]] = (obj.get("strategy", "priority"),
                                        [ReasoningPath.from_dict(p, kg) for p in obj["paths"]])
    return out


def contains_chain(paths: Iterable[ReasoningPath], chain_steps: Sequence[tuple[int, int, int, int]]) -> bool:
    """True if some path starts with exactly the given steps."""
    chain_steps = tuple(chain_steps)
    n = len(chain_steps)
    return any(p.steps[:n] == chain_steps for p in paths)


def terminal_frequencies(paths: Iterable[ReasoningPath]) -> Counter:
    return Counter(p.terminal for p in paths)
