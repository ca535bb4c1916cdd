from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor

CHECKPOINT_VERSION = 1


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class ModelParams:
    """Named parameter tensors plus the Adam moments that go with them."""

    tensors: dict[str, Tensor]
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        for k, p in self.tensors.items():
            self.m.setdefault(k, np.zeros_like(p.data))
            self.v.setdefault(k, np.zeros_like(p.data))

    @classmethod
    def from_modules(cls, **modules) -> "ModelParams":
        tensors: dict[str, Tensor] = {}
        for prefix, module in modules.items():
            if module is None:
                continue
            for k, p in module.named_parameters(prefix + "."):
                tensors[k] = p
        return cls(tensors)

    def zero_grad(self) -> None:
        for p in self.tensors.values():
            p.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.tensors.items()}

    def restore(self, state: Mapping[str, np.ndarray]) -> None:
        for k, p in self.tensors.items():
            p.data = np.array(state[k], dtype=np.float64, copy=True)


def adam_step(
    params: ModelParams,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update; parameters without a gradient see a zero gradient."""
    grads = {}
    for k, p in params.tensors.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {k}")
        grads[k] = g
    b1, b2 = betas
    params.step += 1
    t = params.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, p in params.tensors.items():
        g = grads[k]
        m = params.m[k]
        v = params.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)


def save_checkpoint(path: str | Path, state: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> None:
    arrays = {f"param/{k}": np.asarray(v, dtype=np.float64) for k, v in state.items()}
    arrays["__version__"] = np.array(CHECKPOINT_VERSION)
    for k, v in (meta or {}).items():
        arrays[f"meta/{k}"] = np.array(str(v))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        state = {k[len("param/") :]: z[k].copy() for k in z.files if k.startswith("param/")}
        meta = {k[len("meta/") :]: str(z[k]) for k in z.files if k.startswith("meta/")}
    return state, meta


def state_digest(state: Mapping[str, np.ndarray]) -> str:
    """SHA-256 over parameter names and raw float64 bytes, in sorted key order."""
    h = hashlib.sha256()
    for k in sorted(state):
        h.update(k.encode())
        h.update(np.ascontiguousarray(state[k], dtype=np.float64).tobytes())
    return h.hexdigest()
