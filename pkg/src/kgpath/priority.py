"""Path priority: accumulated walk costs, learned future cost, sigmoid score."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .encoder import EncodedGraph, EncoderConfig, encode_query, encode_subgraph
from .kg import KnowledgeGraph
from .params import CheckpointError, ParamStore, load_checkpoint, save_checkpoint
from .subgraph import QuerySubgraph
from .tensor import Tensor

log = logging.getLogger(__name__)

MODES = ("full", "accum_only", "future_only")
EDGE_MODES = ("elementwise", "bilinear")
MAX_EXACT_COUNT = 2.0 ** 53


class WalkCountOverflow(OverflowError):
    pass


@dataclass
class PriorityConfig:
    max_walk: int = 2
    mode: str = "full"
    edge_mode: str = "elementwise"

    def __post_init__(self):
        if self.max_walk < 1:
            raise ValueError("max_walk must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.edge_mode not in EDGE_MODES:
            raise ValueError(f"edge_mode must be one of {EDGE_MODES}")


@dataclass
class CostTable:
    """Layered walk statistics from the topic entities.

    ``counts[t, i]`` is the number of length-``t`` walks ending at local node
    ``i``; ``layers[t]`` holds the summed edge-cost vectors of those walks;
    ``d_vec`` is the sum over ``t >= 1``.
    """

    counts: np.ndarray
    layers: list[Tensor]
    d_vec: Tensor

    def to_json(self, node_ids=None) -> dict:
        ids = list(node_ids) if node_ids is not None else list(range(self.counts.shape[1]))
        return {
            "nodes": [int(i) for i in ids],
            "counts": self.counts.tolist(),
            "layer_norms": [np.linalg.norm(D.data, axis=1).tolist() for D in self.layers],
            "d_norm": np.linalg.norm(self.d_vec.data, axis=1).tolist(),
        }


@dataclass
class PriorityScore:
    entity: int
    score: float
    d_vec: np.ndarray
    f_vec: np.ndarray


def edge_cost(eg: EncodedGraph, src: int, rel_key: str, dst: int, q=None,
              edge_mode: str = "elementwise") -> Tensor:
    """Query-conditioned cost vector of one step ``src --rel--> dst`` (local indices)."""
    q = T.as_tensor(eg.query_repr if q is None else q)
    h_src = eg.node_repr[src]
    Wh = T.matvec(eg.relation_matrix(rel_key), eg.node_repr[dst])
    if edge_mode == "elementwise":
        return T.hadamard(T.hadamard(h_src, Wh), q)
    return T.mul(T.sum(T.hadamard(h_src, Wh)), q)


def edge_costs(eg: EncodedGraph, q=None, edge_mode: str = "elementwise") -> Tensor:
    """Cost vectors for every traversal edge of ``eg``, shape (E, d)."""
    q = T.as_tensor(eg.query_repr if q is None else q)
    H, e = eg.node_repr, eg.edges
    if len(e) == 0:
        return T.constant(np.zeros((0, H.shape[1])))
    WH = T.apply_each(eg.rel_stack, H)
    h_src = T.gather(H, e.src)
    wh_dst = T.gather(WH, (eg.edge_rel, e.dst))
    if edge_mode == "elementwise":
        return T.mul(T.mul(h_src, wh_dst), q)
    if edge_mode == "bilinear":
        return T.mul(T.sum(T.mul(h_src, wh_dst), axis=1, keepdims=True), q)
    raise ValueError(f"edge_mode must be one of {EDGE_MODES}")


def accumulate_costs(num_nodes: int, src, dst, w, topics, max_walk: int) -> CostTable:
    """Sum of summed edge costs over every walk of length 1..``max_walk``
    that starts at a topic node, per end node.

    Layer recurrence over traversal edges (e' -> e with cost w)::

        c_t(e) = sum c_{t-1}(e')
        D_t(e) = sum D_{t-1}(e') + c_{t-1}(e') * w
    """
    if max_walk < 1:
        raise ValueError("max_walk must be >= 1")
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    w = T.as_tensor(w)
    dim = w.shape[1]
    c = np.zeros(num_nodes)
    c[np.asarray(topics, dtype=np.int64)] = 1.0
    counts = [c]
    D = T.constant(np.zeros((num_nodes, dim)))
    layers = [D]
    total = None
    for t in range(1, max_walk + 1):
        c_prev = counts[-1]
        contrib = T.mul(w, c_prev[src][:, None])
        if t > 1:
            contrib = T.add(T.gather(D, src), contrib)
        D = T.scatter_add(contrib, dst, num_nodes)
        c_new = np.bincount(dst, weights=c_prev[src], minlength=num_nodes).astype(np.float64)
        if c_new.size and c_new.max() > MAX_EXACT_COUNT:
            raise WalkCountOverflow(
                f"walk count exceeds 2^53 at length {t}; use a smaller max_walk")
        counts.append(c_new)
        layers.append(D)
        total = D if total is None else T.add(total, D)
    return CostTable(np.stack(counts), layers, total)


def future_cost(d_vec, q, params: ParamStore, dim: int | None = None) -> Tensor:
    """Two-layer feed-forward estimate from ``[d_vec, q]``; rows of ``d_vec``
    may be batched."""
    d_vec, q = T.as_tensor(d_vec), T.as_tensor(q)
    d = dim or q.shape[-1]
    if d_vec.shape[-1] != q.shape[-1]:
        raise T.ShapeError(f"future_cost: shapes {d_vec.shape} and {q.shape}")
    if d_vec.data.ndim == 2:
        q = T.mul(np.ones((d_vec.shape[0], 1)), q)
    x = T.concat([d_vec, q], axis=-1)
    h = T.relu(T.linear(x, params.leaf("future.w1", (d, 2 * d)), params.leaf("future.b1", (d,), "zeros")))
    return T.linear(h, params.leaf("future.w2", (d, d)), params.leaf("future.b2", (d,), "zeros"))


def priority_logits(d_vec, f_vec, params: ParamStore, mode: str = "full") -> Tensor:
    """Pre-sigmoid MLP output for each row."""
    if mode == "full":
        x = T.add(d_vec, f_vec)
    elif mode == "accum_only":
        x = T.as_tensor(d_vec)
    elif mode == "future_only":
        x = T.as_tensor(f_vec)
    else:
        raise ValueError(f"mode must be one of {MODES}")
    d = x.shape[-1]
    h = T.relu(T.linear(x, params.leaf("mlp.w1", (d, d)), params.leaf("mlp.b1", (d,), "zeros")))
    z = T.linear(h, params.leaf("mlp.w2", (1, d)), params.leaf("mlp.b2", (1,), "zeros"))
    return T.sum(z, axis=-1)


def priority(entity: int, ct: CostTable, q, params: ParamStore, mode: str = "full") -> PriorityScore:
    """Score one node (local index) of the cost table."""
    d_vec = ct.d_vec[entity]
    f_vec = future_cost(d_vec, q, params)
    z = priority_logits(d_vec, f_vec, params, mode)
    return PriorityScore(entity, float(T.sigmoid(z).data), d_vec.data.copy(), f_vec.data.copy())


@dataclass
class Forward:
    logits: Tensor
    scores: np.ndarray
    costs: CostTable
    encoded: EncodedGraph
    f_vec: Tensor


@dataclass
class PriorityModel:
    """Encoder + cost accumulation + scorer sharing one parameter store."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    config: PriorityConfig = field(default_factory=PriorityConfig)
    params: ParamStore | None = None
    query_vectors: dict | None = None

    def __post_init__(self):
        if self.params is None:
            self.params = ParamStore(self.encoder.seed)

    @property
    def dims(self) -> dict:
        return {"dim": self.encoder.dim, "layers": self.encoder.layers}

    def forward(self, kg: KnowledgeGraph, sg: QuerySubgraph, question: str,
                query_id: str | None = None, mode: str | None = None) -> Forward:
        mode = mode or self.config.mode
        eg = encode_subgraph(kg, sg, self.params, self.encoder)
        eg.query_repr = encode_query(question, self.params, self.encoder,
                                     query_id=query_id, vectors=self.query_vectors)
        w = edge_costs(eg, edge_mode=self.config.edge_mode)
        ct = accumulate_costs(sg.num_nodes, eg.edges.src, eg.edges.dst, w, sg.topic_local,
                              self.config.max_walk)
        f = future_cost(ct.d_vec, eg.query_repr, self.params)
        z = priority_logits(ct.d_vec, f, self.params, mode)
        return Forward(z, T.sigmoid(z).data.copy(), ct, eg, f)

    def scores(self, kg: KnowledgeGraph, sg: QuerySubgraph, question: str,
               query_id: str | None = None) -> np.ndarray:
        with T.no_grad():
            return self.forward(kg, sg, question, query_id).scores

    def save(self, path: str | Path) -> None:
        config = {"encoder": self.encoder.to_dict(), "priority": asdict(self.config)}
        save_checkpoint(self.params, path, self.dims, config)

    @classmethod
    def load(cls, path: str | Path, expect_dims: dict | None = None) -> "PriorityModel":
        params, dims, config = load_checkpoint(path)
        if expect_dims is not None:
            bad = {k: (dims.get(k), v) for k, v in expect_dims.items() if dims.get(k) != v}
            if bad:
                raise CheckpointError(f"checkpoint dims do not match config: {bad}")
        enc = EncoderConfig(**config.get("encoder", {}))
        return cls(enc, PriorityConfig(**config.get("priority", {})), params)


def dump_cost_table(ct: CostTable, path: str | Path, node_ids=None) -> None:
    Path(path).write_text(json.dumps(ct.to_json(node_ids)) + "\n", encoding="utf-8")
