"""Relational message passing over a query subgraph, and query encoding."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .kg import KnowledgeGraph
from .params import ParamStore
from .subgraph import IN, QuerySubgraph, TraversalEdges
from .tensor import Tensor

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"[^0-9a-z]+")


@dataclass
class EncoderConfig:
    dim: int = 32
    layers: int = 2
    agg: str = "sum"
    seed: int = 0
    directed: bool = False      # messages only along stored head -> tail edges
    tie_layers: bool = True     # one W_r shared by all layers
    train_entities: bool = True  # False keeps the random initial entity vectors fixed
    query_source: str = "hashed_bow"

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.agg not in ("sum", "mean"):
            raise ValueError(f"agg must be 'sum' or 'mean', got {self.agg!r}")
        if self.query_source not in ("hashed_bow", "precomputed"):
            raise ValueError(f"unknown query source {self.query_source!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def relation_key(label: str, direction: int, layer: int | None = None) -> str:
    key = f"rel:{label}" + ("^-1" if direction == IN else "")
    return key if layer is None else f"{key}@{layer}"


@dataclass
class EncodedGraph:
    """Final-layer node representations aligned to ``sg.node_ids``.

    ``rel_stack[i]`` is the matrix for ``rel_keys[i]`` and ``edge_rel[j]``
    indexes it for traversal edge ``j``.
    """

    node_repr: Tensor
    rel_keys: list[str]
    rel_stack: Tensor
    edges: TraversalEdges
    edge_rel: np.ndarray
    query_repr: Tensor | None = None
    rel_index: dict[str, int] = field(default_factory=dict)

    def relation_matrix(self, key: str) -> Tensor:
        return self.rel_stack[self.rel_index[key]]


def _edge_keys(kg: KnowledgeGraph, edges: TraversalEdges) -> tuple[list[str], np.ndarray]:
    keys = [relation_key(kg.relations[r], d) for r, d in zip(edges.rel.tolist(), edges.direction.tolist())]
    uniq = sorted(set(keys))
    pos = {k: i for i, k in enumerate(uniq)}
    return uniq, np.array([pos[k] for k in keys], dtype=np.int64)


def encode_subgraph(kg: KnowledgeGraph, sg: QuerySubgraph, params: ParamStore,
                    cfg: EncoderConfig) -> EncodedGraph:
    """L rounds of ``h <- ReLU(W_self h + AGG_{(e',r,e)} W_r h_e')``.

    With ``cfg.directed`` off, every stored triple also sends a message
    tail -> head through the inverse-relation matrix ``rel:<label>^-1``.
    """
    d, n = cfg.dim, sg.num_nodes
    edges = sg.traversal_edges(directed=cfg.directed)
    rel_keys, edge_rel = _edge_keys(kg, edges)

    if cfg.train_entities:
        H = T.stack([params.leaf(f"ent:{kg.entities[e]}", (d,), "normal") for e in sg.node_ids])
    else:
        H = T.constant(np.stack([params.get(f"ent:{kg.entities[e]}", (d,), "normal") for e in sg.node_ids]))

    def rel_stack(layer):
        if not rel_keys:
            return T.constant(np.zeros((0, d, d)))
        suffix = "" if cfg.tie_layers else f"@{layer}"
        return T.stack([params.leaf(k + suffix, (d, d)) for k in rel_keys])

    indeg = np.bincount(edges.dst, minlength=n).astype(np.float64)
    inv_deg = 1.0 / np.maximum(indeg, 1.0)
    W = None
    for layer in range(1, cfg.layers + 1):
        W = rel_stack(layer)
        W_self = params.leaf(f"gnn.self.{layer}", (d, d))
        update = T.linear(H, W_self)
        if len(edges):
            WH = T.apply_each(W, H)
            msg = T.scatter_add(T.gather(WH, (edge_rel, edges.src)), edges.dst, n)
            if cfg.agg == "mean":
                msg = T.mul(msg, inv_deg[:, None])
            update = T.add(update, msg)
        H = T.relu(update)
    return EncodedGraph(H, rel_keys, W, edges, edge_rel,
                        rel_index={k: i for i, k in enumerate(rel_keys)})


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.split(text.lower()) if t]


def _bucket(token: str, dim: int) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little") % dim


def hashed_bow(text: str, dim: int) -> np.ndarray:
    """Token counts hashed into ``dim`` buckets, L2-normalised."""
    v = np.zeros(dim)
    for tok in tokenize(text):
        v[_bucket(tok, dim)] += 1.0
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def load_query_vectors(path: str | Path) -> dict[str, np.ndarray]:
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out[str(obj["id"])] = np.asarray(obj["vector"], dtype=np.float64)
    return out


def encode_query(question: str, params: ParamStore, cfg: EncoderConfig, source: str | None = None,
                 query_id: str | None = None, vectors: dict[str, np.ndarray] | None = None) -> Tensor:
    """Project a question (or its precomputed vector) into the model space."""
    source = source or cfg.query_source
    d = cfg.dim
    if source == "precomputed":
        if vectors is None or query_id not in vectors:
            raise KeyError(f"no precomputed vector for query {query_id!r}")
        raw = vectors[query_id]
        name = "query.proj" if raw.shape[0] == d else f"query.proj.{raw.shape[0]}"
        return T.matvec(params.leaf(name, (d, raw.shape[0])), T.constant(raw))
    if source != "hashed_bow":
        raise ValueError(f"unknown query source {source!r}")
    if not tokenize(question):
        log.warning("empty question text; query vector is zero")
        params.get("query.proj", (d, d))
        return T.constant(np.zeros(d))
    return T.matvec(params.leaf("query.proj", (d, d)), T.constant(hashed_bow(question, d)))
