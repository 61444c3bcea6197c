# %% [markdown]
# # Walk costs on a toy graph
#
# The priority of an entity combines the cost of the walks that reach it from
# the topic entity with an estimate of the cost still to come. This demo builds
# a four-node diamond, checks the walk counts by hand, and prints the scores
# an untrained model assigns.

# %%
import numpy as np

from kgpath.encoder import EncoderConfig
from kgpath.kg import KnowledgeGraph, Query, bind_query
from kgpath.priority import PriorityConfig, PriorityModel, accumulate_costs
from kgpath.subgraph import extract_subgraph

kg = KnowledgeGraph.from_triples([
    ("A", "r", "B"), ("A", "r", "C"), ("B", "s", "D"), ("C", "s", "D"),
])
q = Query("toy", "what is the s of the r of A", ("A",), ("D",))
sg = extract_subgraph(kg, bind_query(kg, q), 2)
print("nodes in the subgraph:", [kg.entities[e] for e in sg.node_ids])

# %% [markdown]
# Following edges forward only, with a unit cost vector on every edge, D is
# reached by two walks of length two, so its accumulated cost is twice the
# cost of one such walk.

# %%
edges = sg.traversal_edges(directed=True)
w = np.ones((len(edges), 2))
table = accumulate_costs(sg.num_nodes, edges.src, edges.dst, w, [sg.local[kg.entity_id("A")]], max_walk=2)
for name in "ABCD":
    i = sg.local[kg.entity_id(name)]
    print(name, "walks by length", table.counts[:, i].astype(int).tolist(), "cost", table.d_vec.data[i])

# %% [markdown]
# An untrained model has small random weights, so every node scores close to one half.

# %%
model = PriorityModel(EncoderConfig(dim=8, layers=2), PriorityConfig(max_walk=2))
scores = model.scores(kg, sg, q.question, q.id)
for e, s in zip(sg.node_ids, scores):
    print(f"{kg.entities[e]:>2}  {s:.3f}")
