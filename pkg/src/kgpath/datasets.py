"""Instruction-tuning records and path-wise preference pairs."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .extract import ReasoningPath, verbalize_path
from .kg import KnowledgeGraph, Query
from .subgraph import QuerySubgraph

log = logging.getLogger(__name__)

SFT_INSTRUCTION = ("Based on the reasoning paths, please answer the given question. "
                   "Please keep the answer as simple as possible and return all the "
                   "possible answers as a list.")
DPO_INSTRUCTION = ("Given the question, please generate coherent reasoning paths that "
                   "can support answering it.")
DEFAULT_BUDGET = 2048

Tokenizer = Callable[[str], Sequence]


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    """Whitespace token count, or ``len(tokenizer(text))`` when one is given."""
    if tokenizer is not None:
        return len(tokenizer(text))
    return len(text.split())


def sft_prompt(question: str, paths: Sequence[str]) -> str:
    return (f"Instruction: {SFT_INSTRUCTION}\n\n"
            f"Reasoning Paths: {chr(10).join(paths)}\n"
            f"Question: {question}\n"
            f"Answer: ")


def dpo_prompt(question: str) -> str:
    return f"Instruction: {DPO_INSTRUCTION}\n\nQuestion: {question}"


def render_answers(answers: Iterable[str]) -> str:
    return json.dumps(sorted(set(answers)), ensure_ascii=False)


@dataclass
class InstructionRecord:
    query_id: str
    prompt: str
    completion: str
    token_count: int
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PreferencePair:
    query_id: str
    prompt: str
    chosen: str
    rejected: str

    def to_dict(self) -> dict:
        return asdict(self)


def _dedupe(paths: Sequence[ReasoningPath], kg: KnowledgeGraph) -> list[tuple[str, float]]:
    seen, out = set(), []
    for p in paths:
        text = verbalize_path(p, kg)
        if text not in seen:
            seen.add(text)
            out.append((text, p.terminal_score))
    return out


def build_sft_record(query: Query, paths: Sequence[ReasoningPath], kg: KnowledgeGraph,
                     budget: int = DEFAULT_BUDGET, tokenizer: Tokenizer | None = None) -> InstructionRecord:
    """Fill the answering template; drop lowest-scoring paths until the prompt
    fits ``budget`` tokens. Flags: ``no_paths``, ``truncated``, ``over_budget``."""
    items = _dedupe(paths, kg)
    flags = [] if items else ["no_paths"]
    # drop order: lowest score first, later position first among equal scores
    drop_order = sorted(range(len(items)),
                        key=lambda i: (-math.inf if math.isnan(items[i][1]) else items[i][1], -i))
    kept = set(range(len(items)))
    prompt = sft_prompt(query.question, [t for t, _ in items])
    n = count_tokens(prompt, tokenizer)
    for i in drop_order:
        if n <= budget:
            break
        kept.discard(i)
        prompt = sft_prompt(query.question, [items[j][0] for j in sorted(kept)])
        n = count_tokens(prompt, tokenizer)
    if len(kept) < len(items):
        flags.append("truncated")
    if n > budget:
        flags.append("over_budget")
    return InstructionRecord(query.id, prompt, render_answers(query.answers), n, flags)


def emit_sft(queries: Sequence[Query], paths: Mapping[str, Sequence[ReasoningPath]], kg: KnowledgeGraph,
             budget: int = DEFAULT_BUDGET, tokenizer: Tokenizer | None = None) -> list[InstructionRecord]:
    out = []
    for q in queries:
        if q.id not in paths:
            log.warning("query %s has no paths entry; emitting an empty paths section", q.id)
        out.append(build_sft_record(q, paths.get(q.id, ()), kg, budget, tokenizer))
    flagged = sum(1 for r in out if r.flags)
    if flagged:
        log.info("%d of %d SFT records flagged", flagged, len(out))
    return out


def query_rng(seed: int, query_id: str) -> np.random.Generator:
    """Generator derived from the run seed and the query id alone, so results
    do not depend on processing order."""
    h = int.from_bytes(hashlib.blake2b(query_id.encode("utf-8"), digest_size=8).digest(), "little")
    return np.random.default_rng([seed, h])


def _walk(adj, start: int, length: int, rng: np.random.Generator):
    cur, steps = start, []
    for _ in range(length):
        if not adj[cur]:
            return None
        nxt, r, d = adj[cur][int(rng.integers(len(adj[cur])))]
        steps.append((cur, r, d, nxt))
        cur = nxt
    return steps


def sample_rejected(sg: QuerySubgraph, preferred: Sequence[ReasoningPath], n: int,
                    rng: np.random.Generator, max_tries: int = 50) -> list[ReasoningPath] | None:
    """``n`` distinct random walks whose lengths follow the preferred lengths
    in order, none equal to a preferred path. None if sampling runs dry."""
    from .extract import _adjacency
    adj = _adjacency(sg)
    ids = sg.node_ids
    topics = sorted(set(sg.topic_local))
    banned = {p.key() for p in preferred}
    lengths = [p.length for p in preferred]
    out = []
    for i in range(n):
        length = lengths[i % len(lengths)]
        for _ in range(max_tries):
            start = topics[int(rng.integers(len(topics)))]
            steps = _walk(adj, start, length, rng)
            if steps is None:
                continue
            p = ReasoningPath(ids[start], tuple((ids[a], r, d, ids[b]) for a, r, d, b in steps))
            if p.key() not in banned:
                banned.add(p.key())
                out.append(p)
                break
        else:
            return None
    return out


def emit_dpo(queries: Sequence[Query], paths: Mapping[str, Sequence[ReasoningPath]],
             subgraphs: Mapping[str, QuerySubgraph], kg: KnowledgeGraph, ratio: float = 1.0,
             seed: int = 0) -> tuple[list[PreferencePair], int]:
    """One pair per query: the important paths against length-matched random
    walks of the same subgraph. Returns ``(pairs, skipped)``."""
    if ratio <= 0:
        raise ValueError("ratio must be > 0")
    pairs, skipped = [], 0
    for q in queries:
        preferred = list(paths.get(q.id, ()))
        if not preferred:
            skipped += 1
            continue
        n = max(1, int(round(ratio * len(preferred))))
        rejected = sample_rejected(subgraphs[q.id], preferred, n, query_rng(seed, q.id))
        if rejected is None:
            log.debug("query %s: cannot sample %d distinct rejected paths", q.id, n)
            skipped += 1
            continue
        pairs.append(PreferencePair(
            q.id, dpo_prompt(q.question),
            "\n".join(t for t, _ in _dedupe(preferred, kg)),
            "\n".join(verbalize_path(p, kg) for p in rejected)))
    if skipped:
        log.warning("skipped %d queries when building preference pairs", skipped)
    return pairs, skipped


def dpo_objective(logp_w: float, logp_l: float, ref_logp_w: float, ref_logp_l: float,
                  beta: float = 0.1) -> float:
    """Negative log-sigmoid of the scaled policy-vs-reference margin."""
    if not beta > 0:
        raise ValueError("beta must be > 0")
    margin = beta * ((logp_w - logp_l) - (ref_logp_w - ref_logp_l))
    return float(np.logaddexp(0.0, -margin))


def write_jsonl(path: str | Path, rows: Iterable) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in rows:
            obj = r.to_dict() if hasattr(r, "to_dict") else r
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
