"""Training-set augmentations: signal scaling, packet-loss drops, additive noise.

All three act on detected (non-zero) entries only, so an undetected beacon
never turns into a phantom reading. Labels are untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import Run, RssiWindow


@dataclass(frozen=True)
class AugmentConfig:
    scale_factors: tuple[float, ...] = (0.9, 0.7)
    drop_prob: float = 0.1
    noise_var: float = 5.0
    # N(0, 5) read as variance 5; set False to read it as a standard deviation
    noise_is_variance: bool = True
    copies: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scale_factors", tuple(float(f) for f in self.scale_factors))
        for f in self.scale_factors:
            _check_factor(f)
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")

    @property
    def noise_variance(self) -> float:
        return self.noise_var if self.noise_is_variance else self.noise_var**2


def _check_factor(factor: float) -> None:
    if not 0.0 < factor <= 1.0:
        raise ValueError(f"scale factor must be in (0, 1], got {factor}")


def scale_values(values: np.ndarray, factor: float) -> np.ndarray:
    _check_factor(factor)
    return np.asarray(values, dtype=np.float64) * factor


def drop_values(values: np.ndarray, drop_prob: float, rng: np.random.Generator) -> np.ndarray:
    v = np.array(values, dtype=np.float64, copy=True)
    hit = rng.random(v.shape) < drop_prob
    v[hit & (v > 0)] = 0.0
    return v


def noise_values(values: np.ndarray, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    noise = rng.standard_normal(v.shape) * np.sqrt(noise_var)
    return np.where(v > 0, np.maximum(v + noise, 0.0), 0.0)


def augment_scale(w: RssiWindow, factor: float) -> RssiWindow:
    return w.with_values(scale_values(w.values, factor))


def augment_drop(w: RssiWindow, drop_prob: float, seed: int) -> RssiWindow:
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError("drop_prob must be in [0, 1]")
    return w.with_values(drop_values(w.values, drop_prob, np.random.default_rng(seed)))


def augment_noise(w: RssiWindow, noise_var: float, seed: int) -> RssiWindow:
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    return w.with_values(noise_values(w.values, noise_var, np.random.default_rng(seed)))


def augment_runs(runs: Sequence[Run], cfg: AugmentConfig) -> list[Run]:
    """Augmented copies of ``runs`` (originals not included).

    Transforms are applied to the whole (T, B) run so overlapping windows of
    an augmented run stay mutually consistent. Per run and copy: one scaled
    run per factor, plus one run with drops followed by noise.
    """
    out: list[Run] = []
    seeds = np.random.SeedSequence(cfg.seed).spawn(max(len(runs), 1))
    for run, ss in zip(runs, seeds):
        rng = np.random.default_rng(ss)
        for c in range(cfg.copies):
            for f in cfg.scale_factors:
                out.append(replace(run, rssi=scale_values(run.rssi, f), run_id=f"{run.run_id}~s{f:g}.{c}"))
            v = drop_values(run.rssi, cfg.drop_prob, rng)
            v = noise_values(v, cfg.noise_variance, rng)
            out.append(replace(run, rssi=v, run_id=f"{run.run_id}~dn.{c}"))
    return out
