"""k-hop query subgraph extraction."""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .kg import BoundQuery, KnowledgeGraph

log = logging.getLogger(__name__)

OUT, IN = 0, 1


@dataclass(frozen=True, eq=False)
class QuerySubgraph:
    """Induced neighbourhood around the topic entities of one query.

    ``node_ids`` is sorted ascending; a node's position in it is its local
    index, which every per-node array downstream (encodings, cost tables,
    scores) is aligned to.
    """

    node_ids: tuple[int, ...]
    relation_ids: tuple[int, ...]
    triples: np.ndarray  # (m, 3) global (h, r, t) ids
    topic_ids: tuple[int, ...]
    hop_of: dict[int, int]

    @cached_property
    def local(self) -> dict[int, int]:
        return {e: i for i, e in enumerate(self.node_ids)}

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @cached_property
    def topic_local(self) -> np.ndarray:
        return np.array([self.local[t] for t in self.topic_ids], dtype=np.int64)

    def traversal_edges(self, directed: bool = False) -> "TraversalEdges":
        """Edges usable by a walk, as local-index arrays.

        Each stored triple (h, r, t) yields a forward step h -> t tagged OUT
        and, unless ``directed``, a reverse step t -> h tagged IN.
        """
        key = "_edges_directed" if directed else "_edges_both"
        cached = self.__dict__.get(key)
        if cached is not None:
            return cached
        loc = self.local
        h = np.array([loc[x] for x in self.triples[:, 0].tolist()], dtype=np.int64)
        t = np.array([loc[x] for x in self.triples[:, 2].tolist()], dtype=np.int64)
        r = self.triples[:, 1].astype(np.int64)
        if directed:
            edges = TraversalEdges(h, t, r, np.full(len(h), OUT, dtype=np.int64))
        else:
            edges = TraversalEdges(
                np.concatenate([h, t]), np.concatenate([t, h]), np.concatenate([r, r]),
                np.concatenate([np.full(len(h), OUT), np.full(len(h), IN)]).astype(np.int64))
        self.__dict__[key] = edges
        return edges

    def to_json(self, kg: KnowledgeGraph | None = None) -> dict:
        def name(e):
            return kg.entities[e] if kg is not None else e

        def rname(r):
            return kg.relations[r] if kg is not None else r

        return {
            "nodes": [name(e) for e in self.node_ids],
            "topics": [name(e) for e in self.topic_ids],
            "triples": [[name(h), rname(r), name(t)] for h, r, t in self.triples.tolist()],
            "hop_of": {str(name(e)): h for e, h in sorted(self.hop_of.items())},
        }

    def dump(self, path: str | Path, kg: KnowledgeGraph | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_json(kg), indent=1, ensure_ascii=False) + "\n",
                              encoding="utf-8")


@dataclass(frozen=True)
class TraversalEdges:
    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray
    direction: np.ndarray

    def __len__(self) -> int:
        return len(self.src)


def _adjacent(kg: KnowledgeGraph, e: int, directed: bool):
    for _, t in kg.out_index[e]:
        yield t
    if not directed:
        for _, h in kg.in_index[e]:
            yield h


def bfs_hops(kg: KnowledgeGraph, sources, k: int, directed: bool = False) -> dict[int, int]:
    """Multi-source BFS distances, truncated at ``k`` hops."""
    hop = {s: 0 for s in sources}
    frontier = deque(hop)
    while frontier:
        e = frontier.popleft()
        if hop[e] == k:
            continue
        for nb in _adjacent(kg, e, directed):
            if nb not in hop:
                hop[nb] = hop[e] + 1
                frontier.append(nb)
    return hop


def extract_subgraph(kg: KnowledgeGraph, bq: BoundQuery, k: int = 3, directed: bool = False,
                     max_nodes: int | None = None) -> QuerySubgraph:
    """Union of the ``k``-hop neighbourhoods of the topic entities plus every
    KG triple whose endpoints both fall inside it.

    ``directed`` restricts reachability to head-to-tail steps. ``max_nodes``
    truncates dense neighbourhoods, keeping topics first and then nodes
    ordered by hop, descending degree and id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    topics = tuple(bq.topic_ids)
    hop = bfs_hops(kg, topics, k, directed)
    for t in topics:
        if kg.degree(t) == 0:
            log.warning("query %s: topic entity %r has no incident edges", bq.id, kg.entities[t])
    if max_nodes is not None and len(hop) > max_nodes:
        ranked = sorted(hop, key=lambda e: (hop[e] > 0, hop[e], -kg.degree(e), e))
        keep = set(ranked[:max(max_nodes, len(topics))])
        hop = {e: h for e, h in hop.items() if e in keep}

    member = np.zeros(kg.num_entities, dtype=bool)
    member[list(hop)] = True
    tr = kg.triples
    mask = member[tr[:, 0]] & member[tr[:, 2]]
    triples = tr[mask].copy()
    return QuerySubgraph(
        node_ids=tuple(sorted(hop)),
        relation_ids=tuple(sorted(set(triples[:, 1].tolist()))),
        triples=triples,
        topic_ids=topics,
        hop_of=dict(sorted(hop.items())),
    )


def subgraph_stats(sg: QuerySubgraph) -> dict[str, int]:
    return {
        "node_count": len(sg.node_ids),
        "triple_count": int(len(sg.triples)),
        "relation_count": len(sg.relation_ids),
        "max_hop": max(sg.hop_of.values(), default=0),
    }
