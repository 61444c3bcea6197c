"""Knowledge-graph reasoning paths: subgraph retrieval, a learned path
priority, top-K path extraction, corpus emission and answer evaluation."""

__version__ = "0.1.0"

from .kg import KnowledgeGraph, Query, bind_query, load_kg, load_queries
from .subgraph import QuerySubgraph, extract_subgraph
from .encoder import EncoderConfig
from .priority import PriorityConfig, PriorityModel, accumulate_costs
from .train import TrainConfig, train_priority
from .extract import ExtractionConfig, ReasoningPath, extract_paths, random_paths, shortest_paths, verbalize_path
from .datasets import count_tokens, dpo_objective, emit_dpo, emit_sft
from .evaluate import EvalReport, evaluate, f1, hits_at_1, mock_reason
from .bench import SyntheticBenchSpec, generate_bench

__all__ = [
    "KnowledgeGraph", "Query", "bind_query", "load_kg", "load_queries",
    "QuerySubgraph", "extract_subgraph", "EncoderConfig", "PriorityConfig", "PriorityModel",
    "accumulate_costs", "TrainConfig", "train_priority", "ExtractionConfig", "ReasoningPath",
    "extract_paths", "random_paths", "shortest_paths", "verbalize_path", "count_tokens",
    "dpo_objective", "emit_dpo", "emit_sft", "EvalReport", "evaluate", "f1", "hits_at_1",
    "mock_reason", "SyntheticBenchSpec", "generate_bench",
]
