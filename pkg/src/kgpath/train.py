"""Supervised training of the priority function on answer membership."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig
from .kg import BoundQuery, KnowledgeGraph, Query, bind_query
from .optim import OptimState, step
from .priority import PriorityConfig, PriorityModel
from .subgraph import QuerySubgraph, extract_subgraph

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    learning_rate: float = 1e-3
    warmup_ratio: float = 0.03
    negative_ratio: float = 0.0   # sampled negatives per positive; 0 keeps all
    seed: int = 0
    mode: str = "full"
    optimizer: str = "adam"
    hops: int = 3
    beta2: float = 0.999
    prior_bias: bool = False  # start the output bias at the training answer rate

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.negative_ratio < 0:
            raise ValueError("negative_ratio must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainReport:
    loss: list[float] = field(default_factory=list)
    auc: list[float] = field(default_factory=list)
    skipped: int = 0
    checkpoint: str | None = None

    def to_json(self) -> dict:
        return asdict(self)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class Example:
    query: BoundQuery
    subgraph: QuerySubgraph
    labels: np.ndarray  # 1.0 for answer nodes, aligned to subgraph.node_ids


def bce_loss(scores: Sequence[tuple[object, float, bool]]) -> float:
    """Binary cross-entropy over ``(entity, score, is_answer)`` triples."""
    if not any(is_ans for _, _, is_ans in scores):
        raise ValueError("no answer entity among the scores")
    total = 0.0
    for _, s, is_ans in scores:
        if not 0.0 < s < 1.0:
            raise ValueError(f"score {s} outside (0, 1)")
        total -= math.log(s) if is_ans else math.log1p(-s)
    return total


def bce_from_logits(logits: T.Tensor, labels: np.ndarray, weights: np.ndarray | None = None) -> T.Tensor:
    """Same objective on pre-sigmoid logits: softplus(-z) for answers,
    softplus(z) for the rest, optionally weighted per node."""
    sign = np.where(labels > 0, -1.0, 1.0)
    per_node = T.softplus(T.mul(logits, sign))
    if weights is not None:
        per_node = T.mul(per_node, weights)
    return T.sum(per_node)


def negative_weights(labels: np.ndarray, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Per-node loss weights. With ``ratio > 0`` a uniform sample of
    ``ratio * n_pos`` negatives is kept and rescaled to stand for all of them."""
    w = np.ones_like(labels)
    if ratio <= 0:
        return w
    neg = np.flatnonzero(labels == 0)
    k = int(math.ceil(ratio * max(1, int(labels.sum()))))
    if k >= len(neg):
        return w
    keep = rng.choice(neg, size=k, replace=False)
    w[neg] = 0.0
    w[keep] = len(neg) / k
    return w


def make_examples(kg: KnowledgeGraph, queries: Sequence[Query], hops: int = 3,
                  require_answer: bool = True) -> tuple[list[Example], int]:
    """Bind and extract every query. Returns ``(examples, skipped)``; queries
    without any answer inside their subgraph are skipped when ``require_answer``."""
    out, skipped = [], 0
    for q in queries:
        bq = bind_query(kg, q)
        sg = extract_subgraph(kg, bq, hops)
        labels = np.zeros(sg.num_nodes)
        for a in bq.answer_ids:
            if a in sg.local:
                labels[sg.local[a]] = 1.0
        if require_answer and labels.sum() == 0:
            skipped += 1
            continue
        out.append(Example(bq, sg, labels))
    if skipped:
        log.warning("skipped %d queries with no answer inside their subgraph", skipped)
    return out, skipped


def ranking_auc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """P(answer scores above non-answer), ties counted half. None if undefined."""
    pos, neg = scores[labels > 0], scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return None
    diff = pos[:, None] - neg[None, :]
    return float(np.mean((diff > 0) + 0.5 * (diff == 0)))


def evaluate_auc(model: PriorityModel, kg: KnowledgeGraph, examples: Sequence[Example]) -> float:
    vals = []
    for ex in examples:
        a = ranking_auc(model.scores(kg, ex.subgraph, ex.query.question, ex.query.id), ex.labels)
        if a is not None:
            vals.append(a)
    return float(np.mean(vals)) if vals else float("nan")


def train_priority(kg: KnowledgeGraph, queries: Sequence[Query], cfg: TrainConfig,
                   model: PriorityModel | None = None, heldout: Sequence[Query] = (),
                   checkpoint: str | Path | None = None) -> tuple[PriorityModel, TrainReport]:
    """Minimise answer-vs-rest BCE of the priority scores, one optimizer step
    per batch of queries with gradients averaged over the batch."""
    if model is None:
        model = PriorityModel(EncoderConfig(seed=cfg.seed), PriorityConfig(mode=cfg.mode))
    examples, skipped = make_examples(kg, queries, cfg.hops)
    if not examples:
        raise TrainingError("every training query was skipped: no answers inside subgraphs")
    held, _ = make_examples(kg, heldout, cfg.hops) if heldout else ([], 0)
    n_batches = math.ceil(len(examples) / cfg.batch_size)
    opt = OptimState(kind=cfg.optimizer, learning_rate=cfg.learning_rate, beta2=cfg.beta2,
                     warmup_ratio=cfg.warmup_ratio, total_steps=cfg.epochs * n_batches)
    if cfg.prior_bias and "mlp.b2" not in model.params.values:
        rate = float(np.mean([ex.labels.mean() for ex in examples]))
        model.params.set("mlp.b2", np.array([math.log(rate / (1.0 - rate))]))
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport(skipped=skipped)
    mode = cfg.mode

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(examples))
        epoch_loss = 0.0
        for b in range(n_batches):
            batch = sorted((examples[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]),
                           key=lambda ex: ex.query.id)
            for ex in batch:
                fw = model.forward(kg, ex.subgraph, ex.query.question, ex.query.id, mode=mode)
                weights = negative_weights(ex.labels, cfg.negative_ratio, rng)
                loss = bce_from_logits(fw.logits, ex.labels, weights)
                T.backward(loss)
                epoch_loss += loss.item()
            model.params.scale_grads(1.0 / len(batch))
            step(opt, model.params)
        report.loss.append(epoch_loss / len(examples))
        if held:
            report.auc.append(evaluate_auc(model, kg, held))
        log.info("epoch %d/%d loss %.4f%s", epoch + 1, cfg.epochs, report.loss[-1],
                 f" auc {report.auc[-1]:.4f}" if held else "")
        if not math.isfinite(report.loss[-1]):
            raise TrainingError(f"loss diverged at epoch {epoch + 1}")

    if checkpoint is not None:
        model.save(checkpoint)
        report.checkpoint = str(checkpoint)
    return model, report


def rank_entities(model: PriorityModel, kg: KnowledgeGraph, sg: QuerySubgraph, question: str,
                  query_id: str | None = None) -> list[tuple[int, float]]:
    """Subgraph entities by descending priority, ties by ascending entity id."""
    s = model.scores(kg, sg, question, query_id)
    return sorted(zip(sg.node_ids, s.tolist()), key=lambda x: (-x[1], x[0]))
