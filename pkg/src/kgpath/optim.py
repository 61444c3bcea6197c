"""SGD and Adam with a linear learning-rate warmup."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamStore
from .tensor import StateError


@dataclass
class OptimState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    warmup_ratio: float = 0.0
    total_steps: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError("warmup_ratio must lie in [0, 1]")

    @property
    def warmup_steps(self) -> float:
        return self.warmup_ratio * self.total_steps

    def lr_at(self, step: int) -> float:
        """Learning rate applied on the ``step``-th update (1-based)."""
        w = self.warmup_steps
        if w > 0 and step < w:
            return self.learning_rate * step / w
        return self.learning_rate


def step(opt: OptimState, params: ParamStore) -> ParamStore:
    """Apply one update from ``params.grads`` then zero them."""
    if not params.has_grad:
        raise StateError("optimizer step before any backward pass")
    opt.step += 1
    lr = opt.lr_at(opt.step)
    for name in params.names():
        g = params.grads[name]
        if opt.kind == "sgd":
            params.values[name] = params.values[name] - lr * g
            continue
        m = opt.m.get(name)
        if m is None:
            m = opt.m[name] = np.zeros_like(g)
            opt.v[name] = np.zeros_like(g)
        v = opt.v[name]
        m *= opt.beta1
        m += (1 - opt.beta1) * g
        v *= opt.beta2
        v += (1 - opt.beta2) * g * g
        t = opt.step
        mhat = m / (1 - opt.beta1 ** t)
        vhat = v / (1 - opt.beta2 ** t)
        params.values[name] = params.values[name] - lr * mhat / (np.sqrt(vhat) + opt.eps)
    params.zero_grad()
    return params

