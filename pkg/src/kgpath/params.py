"""Named parameter storage, seeded lazy initialisation and JSON checkpoints."""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _name_seed(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([int(seed), int.from_bytes(digest, "little")])


class ParamStore:
    """Parameters keyed by name with same-shaped gradient buffers.

    Parameters are created on first request. The initial value depends only
    on ``(seed, name)``, so creation order never matters and two stores with
    the same seed agree on every name they share.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.has_grad = False

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __len__(self) -> int:
        return len(self.values)

    def names(self) -> list[str]:
        return sorted(self.values)

    def get(self, name: str, shape: tuple[int, ...], init: str = "uniform") -> np.ndarray:
        shape = tuple(int(s) for s in shape)
        arr = self.values.get(name)
        if arr is not None:
            if arr.shape != shape:
                raise CheckpointError(f"parameter {name!r} has shape {arr.shape}, expected {shape}")
            return arr
        rng = _name_seed(self.seed, name)
        if init == "uniform":
            bound = 1.0 / np.sqrt(shape[-1])
            arr = rng.uniform(-bound, bound, size=shape)
        elif init == "normal":
            arr = 0.1 * rng.standard_normal(shape)
        elif init == "zeros":
            arr = np.zeros(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.values[name] = arr
        self.grads[name] = np.zeros(shape)
        return arr

    def set(self, name: str, value) -> None:
        value = np.array(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros(value.shape)

    def leaf(self, name: str, shape: tuple[int, ...] | None = None, init: str = "uniform") -> Tensor:
        """A tape leaf bound to ``name``; its gradient is added to ``grads[name]``."""
        arr = self.values[name] if shape is None else self.get(name, shape, init)

        def sink(g, name=name):
            self.grads[name] += g
            self.has_grad = True

        return Tensor(arr, requires_grad=True, sink=sink)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)
        self.has_grad = False

    def scale_grads(self, factor: float) -> None:
        for g in self.grads.values():
            g *= factor

    def copy(self) -> "ParamStore":
        out = ParamStore(self.seed)
        out.values = {k: v.copy() for k, v in self.values.items()}
        out.grads = {k: np.zeros_like(v) for k, v in self.values.items()}
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([self.values[n].ravel() for n in self.names()]) if self.values else np.zeros(0)


def save_checkpoint(params: ParamStore, path: str | Path, dims: dict, config: dict | None = None) -> None:
    """Versioned JSON with base64 little-endian float64 payloads."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "dims": dims,
        "seed": params.seed,
        "config": config or {},
        "parameters": {
            name: {
                "shape": list(params.values[name].shape),
                "data": base64.b64encode(params.values[name].astype("<f8").tobytes()).decode("ascii"),
            }
            for name in params.names()
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ParamStore, dict, dict]:
    """Returns ``(params, dims, config)``."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a JSON checkpoint ({exc})") from exc
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    params = ParamStore(payload["seed"])
    for name, spec in payload["parameters"].items():
        raw = base64.b64decode(spec["data"])
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(spec["shape"])
        params.set(name, arr)
    return params, payload["dims"], payload.get("config", {})
