# %% [markdown]
# # Train a priority model and read its paths
#
# A planted-path benchmark is generated, the priority model is trained
# on its training split, and the top paths for one held-out question are
# printed together with the instruction-tuning prompt they produce.

# %%
import logging

from kgpath.bench import SyntheticBenchSpec, generate_bench
from kgpath.datasets import build_sft_record
from kgpath.encoder import EncoderConfig
from kgpath.extract import ExtractionConfig, extract_paths, verbalize_path
from kgpath.kg import bind_query
from kgpath.priority import PriorityConfig, PriorityModel
from kgpath.subgraph import extract_subgraph
from kgpath.train import TrainConfig, train_priority

logging.basicConfig(level=logging.INFO, format="%(message)s")

bench = generate_bench(SyntheticBenchSpec(seed=1))
kg = bench.kg()
train_q, test_q = bench.split()
print(len(kg.entities), "entities,", len(train_q), "training and", len(test_q), "held-out questions")

# %%
model = PriorityModel(EncoderConfig(dim=32, layers=3, agg="mean", train_entities=False),
                      PriorityConfig(max_walk=3))
model, report = train_priority(kg, train_q, TrainConfig(epochs=20, learning_rate=3e-3, prior_bias=True),
                               model, heldout=test_q)
print("held-out AUC by epoch:", [round(a, 3) for a in report.auc])

# %% [markdown]
# Path extraction keeps the best few entities at each expansion step and
# follows back-pointers to recover the walks that reached them.

# %%
q = test_q[0]
sg = extract_subgraph(kg, bind_query(kg, q), 3)
paths = extract_paths(kg, sg, ExtractionConfig(K=3, T=3), model, q.question, q.id)
print(q.question, "->", q.answers)
for p in paths:
    print(f"  {p.scores[-1]:.3f}  {verbalize_path(p, kg)}")

# %%
print(build_sft_record(q, paths, kg).prompt)
