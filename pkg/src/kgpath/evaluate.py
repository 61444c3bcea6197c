"""Answer metrics, the path-terminal mock reasoner and grouped breakdowns."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .extract import ReasoningPath
from .kg import KnowledgeGraph, Query

_WS = re.compile(r"\s+")

HOP_BUCKETS = ("1", "2", ">=3")
ANSWER_BUCKETS = ("1", "2-4", "5-9", ">=10")


class EvalError(ValueError):
    pass


def normalize(label: str) -> str:
    return _WS.sub(" ", str(label).strip().lower())


def _norm_set(labels: Iterable[str]) -> set[str]:
    return {normalize(x) for x in labels}


def hit_at_1(predicted: Sequence[str], gold: Iterable[str]) -> float:
    return float(bool(predicted) and normalize(predicted[0]) in _norm_set(gold))


def prf(predicted: Iterable[str], gold: Iterable[str]) -> tuple[float, float, float]:
    """Set precision, recall and F1 after normalization; empty sets give 0."""
    p, g = _norm_set(predicted), _norm_set(gold)
    inter = len(p & g)
    prec = inter / len(p) if p else 0.0
    rec = inter / len(g) if g else 0.0
    f = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return prec, rec, f


def hits_at_1(predictions: Sequence[Sequence[str]], gold: Sequence[Iterable[str]]) -> float:
    if len(predictions) != len(gold):
        raise EvalError("predictions and gold differ in length")
    if not predictions:
        raise EvalError("no queries to evaluate")
    return float(np.mean([hit_at_1(p, g) for p, g in zip(predictions, gold)]))


def f1(predictions: Sequence[Iterable[str]], gold: Sequence[Iterable[str]], average: str = "macro") -> float:
    """Macro: mean of per-question F1. Micro: F1 of pooled overlap counts."""
    if len(predictions) != len(gold):
        raise EvalError("predictions and gold differ in length")
    if not predictions:
        raise EvalError("no queries to evaluate")
    if average == "macro":
        return float(np.mean([prf(p, g)[2] for p, g in zip(predictions, gold)]))
    if average != "micro":
        raise ValueError("average must be 'macro' or 'micro'")
    tp = n_pred = n_gold = 0
    for p, g in zip(predictions, gold):
        ps, gs = _norm_set(p), _norm_set(g)
        tp += len(ps & gs)
        n_pred += len(ps)
        n_gold += len(gs)
    prec = tp / n_pred if n_pred else 0.0
    rec = tp / n_gold if n_gold else 0.0
    return 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0


def mock_reason(paths: Sequence[ReasoningPath], kg: KnowledgeGraph | None = None,
                by: str = "score") -> list:
    """Distinct path terminals, best first.

    ``by="score"`` ranks by the best terminal priority score; ``by="frequency"``
    (for baselines without scores) ranks by how many paths end there. Ties go
    to the smaller entity id. Returns labels when ``kg`` is given, else ids.
    """
    if not paths:
        return []
    if by == "score":
        best: dict[int, float] = {}
        for p in paths:
            s = p.terminal_score
            s = -np.inf if np.isnan(s) else s
            best[p.terminal] = max(best.get(p.terminal, -np.inf), s)
        order = sorted(best, key=lambda e: (-best[e], e))
    elif by == "frequency":
        freq = Counter(p.terminal for p in paths)
        order = sorted(freq, key=lambda e: (-freq[e], e))
    else:
        raise ValueError("by must be 'score' or 'frequency'")
    return [kg.entities[e] for e in order] if kg is not None else order


@dataclass
class Row:
    query_id: str
    predicted: list[str]
    gold: list[str]
    hit: float
    precision: float
    recall: float
    f1: float
    hops: int | None = None
    n_answers: int = 0


@dataclass
class EvalReport:
    hits_at_1: float
    f1_macro: float
    rows: list[Row]
    efficiency: dict = field(default_factory=dict)
    breakdowns: dict = field(default_factory=dict)
    f1_micro: float | None = None

    def to_json(self) -> dict:
        return asdict(self)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def hop_bucket(hops) -> str:
    if hops is None:
        return "unknown"
    return "1" if hops <= 1 else "2" if hops == 2 else ">=3"


def answer_bucket(n) -> str:
    if n is None or n < 1:
        return "unknown"
    return "1" if n == 1 else "2-4" if n <= 4 else "5-9" if n <= 9 else ">=10"


def _query_hops(q: Query) -> int | None:
    h = q.meta.get("hops")
    if h is None and "gold_path" in q.meta:
        h = len(q.meta["gold_path"].get("relations", ()))
    return int(h) if h is not None else None


def evaluate(queries: Sequence[Query], predictions: Mapping[str, Sequence[str]],
             efficiency: dict | None = None) -> EvalReport:
    """Score ranked predictions per query id against each query's answers."""
    if not queries:
        raise EvalError("no queries to evaluate")
    rows = []
    for q in queries:
        pred = list(predictions.get(q.id, ()))
        p, r, f = prf(pred, q.answers)
        rows.append(Row(q.id, pred, sorted(q.answers), hit_at_1(pred, q.answers), p, r, f,
                        _query_hops(q), len(q.answers)))
    report = EvalReport(
        hits_at_1=float(np.mean([x.hit for x in rows])),
        f1_macro=float(np.mean([x.f1 for x in rows])),
        f1_micro=f1([x.predicted for x in rows], [x.gold for x in rows], "micro"),
        rows=rows, efficiency=dict(efficiency or {}))
    report.breakdowns = breakdown(report)
    return report


def breakdown(report: EvalReport) -> dict:
    """Mean Hits@1 and F1 per hop bucket and per answer-count bucket."""
    out = {}
    for name, key in (("hops", lambda x: hop_bucket(x.hops)),
                      ("answers", lambda x: answer_bucket(x.n_answers))):
        groups: dict[str, list[Row]] = {}
        for row in report.rows:
            groups.setdefault(key(row), []).append(row)
        out[name] = {b: {"count": len(rs),
                         "hits_at_1": float(np.mean([r.hit for r in rs])),
                         "f1": float(np.mean([r.f1 for r in rs]))}
                     for b, rs in sorted(groups.items())}
    return out
