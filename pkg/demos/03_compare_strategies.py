# %% [markdown]
# # Priority paths against random and shortest paths
#
# Runs the full command-line pipeline on the default benchmark and compares
# the answer accuracy a simple path-terminal reasoner gets from each path
# strategy.

# %%
import json
import tempfile
from pathlib import Path

from kgpath.cli import run

out = Path(tempfile.mkdtemp()) / "run"
code = run(["pipeline", "--out", str(out)])  # about a minute on one core
print("exit code", code)

# %%
for name in ("eval_report.json", "eval_random.json", "eval_shortest.json"):
    r = json.loads((out / name).read_text())
    print(f"{name:20s} Hits@1 {r['hits_at_1']:.3f}  F1 {r['f1_macro']:.3f}")

# %% [markdown]
# Shortest paths are computed to the gold answers, so they act as an upper
# reference rather than a fair competitor. The manifest records the command,
# the seed and a checksum of every file written.

# %%
manifest = json.loads((out / "manifest.json").read_text())
for k, v in sorted(manifest["outputs"].items()):
    print(f"{k:22s} {v[:16]}")
