"""Brand co-detection statistics and receiver-failure diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Brand, Run


@dataclass(eq=False)
class StatMatrix:
    """m[i, j] = mean of s_j over seconds where beacon i was heard.

    support[i, j] is the number of such seconds, so a zero marks an
    undefined conditional (beacon i never heard), not a zero expectation.
    """

    m: np.ndarray
    support: np.ndarray
    brand: Brand | None = None

    @property
    def n_beacons(self) -> int:
        return self.m.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return self.support > 0

    def scaled(self, factor: float) -> "StatMatrix":
        return StatMatrix(self.m * factor, self.support, self.brand)

    def to_dict(self) -> dict:
        return {
            "brand": None if self.brand is None else self.brand.value,
            "m": self.m.tolist(),
            "support": self.support.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StatMatrix":
        brand = None if d.get("brand") is None else Brand.parse(d["brand"])
        return cls(np.array(d["m"], dtype=np.float64), np.array(d["support"], dtype=np.int64), brand)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix == ".csv":
            np.savetxt(path, self.m, delimiter=",", fmt="%.17g")
        else:
            path.write_text(json.dumps(self.to_dict()))


def compute_stat_matrix(data: np.ndarray | Iterable[Run], brand: Brand | None = None) -> StatMatrix:
    """Conditional expected RSSI from per-second vectors (rows of ``data`` or runs' seconds)."""
    if not isinstance(data, np.ndarray):
        runs = list(data)
        if not runs:
            raise ValueError("no data for the statistics matrix")
        data = np.concatenate([r.rssi for r in runs])
    s = np.asarray(data, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] == 0:
        raise ValueError("expected a nonempty (n_seconds, B) array")
    detected = (s > 0).astype(np.float64)
    sums = detected.T @ s
    counts = detected.sum(axis=0)[:, None]
    support = np.repeat(counts.astype(np.int64), s.shape[1], axis=1)
    m = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return StatMatrix(m, support, brand)


@dataclass(frozen=True)
class ReceiverStats:
    mean_nonzero_rssi: float
    failure_pct: float
    mean_dead_time_s: float


def _zero_streaks(dead: np.ndarray) -> np.ndarray:
    padded = np.concatenate([[False], dead, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return ends - starts


def receiver_stats(run: Run | np.ndarray) -> ReceiverStats:
    """Non-zero mean RSSI, % of all-zero seconds, and mean length of all-zero streaks."""
    s = run.rssi if isinstance(run, Run) else np.asarray(run, dtype=np.float64)
    if s.shape[0] == 0:
        raise ValueError("empty run")
    nz = s[s > 0]
    dead = ~np.any(s > 0, axis=1)
    streaks = _zero_streaks(dead)
    return ReceiverStats(
        float(nz.mean()) if nz.size else 0.0,
        100.0 * float(dead.mean()),
        float(streaks.mean()) if streaks.size else 0.0,
    )


def receiver_stats_by_phone(runs: Sequence[Run]) -> dict[str, ReceiverStats]:
    """Pool streak lengths and seconds across each phone's runs."""
    grouped: dict[str, list[Run]] = {}
    for r in runs:
        grouped.setdefault(r.phone.name, []).append(r)
    out = {}
    for name, rs in grouped.items():
        nz = np.concatenate([r.rssi[r.rssi > 0] for r in rs])
        dead = [~np.any(r.rssi > 0, axis=1) for r in rs]
        streaks = np.concatenate([_zero_streaks(d) for d in dead])
        total = sum(d.size for d in dead)
        out[name] = ReceiverStats(
            float(nz.mean()) if nz.size else 0.0,
            100.0 * sum(int(d.sum()) for d in dead) / total,
            float(streaks.mean()) if streaks.size else 0.0,
        )
    return out


def format_receiver_table(stats: dict[str, ReceiverStats]) -> str:
    lines = [f"{'Phone':<16}{'Mean RSSI':>11}{'Failure(%)':>12}{'Dead time(s)':>14}"]
    for name, st in stats.items():
        lines.append(f"{name:<16}{st.mean_nonzero_rssi:>11.2f}{st.failure_pct:>12.2f}{st.mean_dead_time_s:>14.2f}")
    return "\n".join(lines)
