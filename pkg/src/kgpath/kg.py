"""Immutable triple store with interned ids and adjacency indices."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)

DIRECTIONS = ("out", "in", "both")


class KGError(Exception):
    pass


class KGParseError(KGError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class KGLookupError(KGError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class BindingError(KGError):
    def __init__(self, labels: list[str]):
        self.labels = list(labels)
        super().__init__(f"unresolvable topic entities: {', '.join(map(repr, self.labels))}")


class KnowledgeGraph:
    """Directed multigraph of (head, relation, tail) triples over interned ids.

    Build with :meth:`from_triples` or :func:`load_kg`. Ids are dense and
    assigned in first-appearance order of the lexicographically sorted
    triple list, so two loads of the same multiset always agree.
    """

    def __init__(self, entities: list[str], relations: list[str], triples: np.ndarray):
        self.entities = tuple(entities)
        self.relations = tuple(relations)
        self.entity_index = {label: i for i, label in enumerate(self.entities)}
        self.relation_index = {label: i for i, label in enumerate(self.relations)}
        self.triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.triples.setflags(write=False)
        self.duplicates_dropped = 0

        out_index: list[list[tuple[int, int]]] = [[] for _ in self.entities]
        in_index: list[list[tuple[int, int]]] = [[] for _ in self.entities]
        for h, r, t in self.triples.tolist():
            out_index[h].append((r, t))
            in_index[t].append((r, h))
        self.out_index = tuple(tuple(sorted(x)) for x in out_index)
        self.in_index = tuple(tuple(sorted(x)) for x in in_index)

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, str]]) -> "KnowledgeGraph":
        rows = sorted(set((str(h), str(r), str(t)) for h, r, t in triples))
        if not rows:
            raise KGError("empty knowledge graph")
        entities: dict[str, int] = {}
        relations: dict[str, int] = {}
        ids = []
        for h, r, t in rows:
            hid = entities.setdefault(h, len(entities))
            rid = relations.setdefault(r, len(relations))
            tid = entities.setdefault(t, len(entities))
            ids.append((hid, rid, tid))
        return cls(list(entities), list(relations), np.array(ids, dtype=np.int64))

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def num_triples(self) -> int:
        return len(self.triples)

    def entity_id(self, label: str) -> int:
        try:
            return self.entity_index[label]
        except KeyError:
            raise KGLookupError(f"unknown entity {label!r}") from None

    def relation_id(self, label: str) -> int:
        try:
            return self.relation_index[label]
        except KeyError:
            raise KGLookupError(f"unknown relation {label!r}") from None

    def label_triples(self) -> list[tuple[str, str, str]]:
        E, R = self.entities, self.relations
        return [(E[h], R[r], E[t]) for h, r, t in self.triples.tolist()]

    def degree(self, e: int) -> int:
        return len(self.out_index[e]) + len(self.in_index[e])

    def to_tsv(self, path: str | Path) -> None:
        lines = ["\t".join(row) for row in sorted(self.label_triples())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def __repr__(self) -> str:
        return (f"KnowledgeGraph(entities={self.num_entities}, relations={self.num_relations}, "
                f"triples={self.num_triples})")


def load_kg(path: str | Path, format: str = "tsv") -> KnowledgeGraph:
    """Read a TSV triple file. ``#`` comment lines and blank lines are skipped."""
    if format != "tsv":
        raise ValueError(f"unsupported format {format!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    rows: list[tuple[str, str, str]] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise KGParseError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
            if not all(p.strip() for p in parts):
                raise KGParseError("empty field", lineno)
            rows.append((parts[0], parts[1], parts[2]))
    if not rows:
        raise KGError("empty knowledge graph")
    kg = KnowledgeGraph.from_triples(rows)
    dropped = len(rows) - kg.num_triples
    log.info("loaded %s: %d entities, %d relations, %d triples (%d duplicates dropped)",
             path, kg.num_entities, kg.num_relations, kg.num_triples, dropped)
    kg.duplicates_dropped = dropped
    return kg


def neighbors(kg: KnowledgeGraph, e: int, direction: str = "both") -> list[tuple[int, int, str]]:
    """Incident edges of ``e`` as ``(relation_id, other_entity_id, direction)``."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if not isinstance(e, (int, np.integer)) or not 0 <= e < kg.num_entities:
        raise KGLookupError(f"unknown entity id {e!r}")
    out: list[tuple[int, int, str]] = []
    if direction in ("out", "both"):
        out.extend((r, t, "out") for r, t in kg.out_index[e])
    if direction in ("in", "both"):
        out.extend((r, h, "in") for r, h in kg.in_index[e])
    out.sort(key=lambda x: (x[0], x[1], x[2] != "out"))
    return out


@dataclass(frozen=True)
class Query:
    id: str
    question: str
    topic_entities: tuple[str, ...]
    answers: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.topic_entities:
            raise KGError(f"query {self.id!r} has no topic entities")

    @classmethod
    def from_dict(cls, obj: dict) -> "Query":
        known = {"id", "question", "topic_entities", "answers"}
        return cls(
            id=str(obj["id"]),
            question=str(obj["question"]),
            topic_entities=tuple(obj["topic_entities"]),
            answers=tuple(obj.get("answers") or ()),
            meta={k: v for k, v in obj.items() if k not in known},
        )

    def to_dict(self) -> dict:
        d = {"id": self.id, "question": self.question,
             "topic_entities": list(self.topic_entities), "answers": list(self.answers)}
        d.update(self.meta)
        return d


@dataclass(frozen=True)
class BoundQuery:
    query: Query
    topic_ids: tuple[int, ...]
    answer_ids: tuple[int, ...]
    unresolved_answers: tuple[str, ...] = ()

    @property
    def id(self) -> str:
        return self.query.id

    @property
    def question(self) -> str:
        return self.query.question


def load_queries(path: str | Path) -> list[Query]:
    queries = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                queries.append(Query.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise KGParseError(f"bad query record: {exc}", lineno) from exc
    return queries


def write_queries(path: str | Path, queries: Iterable[Query]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps(q.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def bind_query(kg: KnowledgeGraph, q: Query) -> BoundQuery:
    missing = [t for t in q.topic_entities if t not in kg.entity_index]
    if missing:
        raise BindingError(missing)
    answers, unresolved = [], []
    for a in q.answers:
        if a in kg.entity_index:
            answers.append(kg.entity_index[a])
        else:
            unresolved.append(a)
    if unresolved:
        log.warning("query %s: %d answer(s) not in KG: %s", q.id, len(unresolved), unresolved)
    topic_ids = tuple(dict.fromkeys(kg.entity_index[t] for t in q.topic_entities))
    return BoundQuery(q, topic_ids, tuple(dict.fromkeys(answers)), tuple(unresolved))
