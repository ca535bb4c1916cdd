"""Synthetic BLE RSSI runs with per-phone receiver heterogeneity.

Propagation is a log-distance path-loss surrogate. Each phone profile adds a
gain offset, Gaussian noise, independent per-beacon drops and whole-receiver
failures whose durations are geometric.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .core import RSSI_FLOOR_DBM, Brand, Location, PhoneModelId, Run, Split, shift_rssi

MIN_DISTANCE_M = 0.1


@dataclass(frozen=True)
class Environment:
    beacon_positions: tuple[tuple[float, float], ...]
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    tx_power_dbm: float = -12.0
    measured_power_dbm: float = -77.0
    path_loss_exponent: float = 2.5

    def __post_init__(self):
        pos = tuple(tuple(map(float, p)) for p in self.beacon_positions)
        object.__setattr__(self, "beacon_positions", pos)
        object.__setattr__(self, "bounds", tuple(map(float, self.bounds)))
        if not pos:
            raise ValueError("environment needs at least one beacon")
        if self.measured_power_dbm >= 0:
            raise ValueError("measured power must be negative dBm")
        if not 1.5 <= self.path_loss_exponent <= 4.0:
            raise ValueError("path-loss exponent must lie in [1.5, 4.0]")

    @property
    def n_beacons(self) -> int:
        return len(self.beacon_positions)

    @property
    def beacons(self) -> np.ndarray:
        return np.array(self.beacon_positions)

    def contains(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    @classmethod
    def grid(
        cls,
        nx: int,
        ny: int,
        width: float,
        height: float,
        **kwargs,
    ) -> "Environment":
        """Beacons on an nx-by-ny grid, inset half a cell from the walls."""
        xs = (np.arange(nx) + 0.5) * width / nx
        ys = (np.arange(ny) + 0.5) * height / ny
        pos = tuple((float(x), float(y)) for y in ys for x in xs)
        return cls(pos, (0.0, 0.0, float(width), float(height)), **kwargs)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Environment":
        if "grid" in d:
            g = d["grid"]
            extra = {k: v for k, v in d.items() if k != "grid"}
            return cls.grid(g["nx"], g["ny"], g["width"], g["height"], **extra)
        return cls(
            tuple(tuple(p) for p in d["beacon_positions"]),
            tuple(d["bounds"]),
            d.get("tx_power_dbm", -12.0),
            d.get("measured_power_dbm", -77.0),
            d.get("path_loss_exponent", 2.5),
        )


@dataclass(frozen=True)
class PhoneProfile:
    gain_offset_db: float = 0.0
    noise_var: float = 0.0
    failure_rate: float = 0.0
    mean_dead_time_s: float = 1.0
    per_beacon_drop_rate: float = 0.0

    def __post_init__(self):
        for name in ("failure_rate", "per_beacon_drop_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")
        if self.failure_rate > 0 and self.mean_dead_time_s < 1:
            raise ValueError("mean_dead_time_s must be >= 1 when failures occur")

    @classmethod
    def from_receiver_stats(
        cls, failure_pct: float, dead_time_s: float, **kwargs
    ) -> "PhoneProfile":
        """Pick the per-second failure hazard that yields ``failure_pct`` long-run.

        A failure can only start after a working second, so working spells
        average 1/q seconds and the failed fraction is qD / (1 + qD).
        """
        f = failure_pct / 100.0
        if f <= 0 or dead_time_s <= 0:
            return cls(failure_rate=0.0, mean_dead_time_s=max(dead_time_s, 1.0), **kwargs)
        if f >= 1:
            raise ValueError("failure_pct must be below 100")
        q = f / (dead_time_s * (1.0 - f))
        return cls(failure_rate=min(q, 1.0), mean_dead_time_s=dead_time_s, **kwargs)

    @property
    def expected_failure_pct(self) -> float:
        qd = self.failure_rate * self.mean_dead_time_s
        return 100.0 * qd / (1.0 + qd)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    xy: np.ndarray

    def __len__(self) -> int:
        return int(self.times.size)

    def location(self, k: int) -> Location:
        return Location(float(self.xy[k, 0]), float(self.xy[k, 1]))


def path_loss_rssi(env: Environment, beacon: int, pos: Location | np.ndarray) -> float:
    """Log-distance RSSI in dBm; distances under 10 cm are clamped."""
    p = pos.as_array() if isinstance(pos, Location) else np.asarray(pos, dtype=np.float64)
    return float(path_loss_matrix(env, p[None, :])[0, beacon])


def path_loss_matrix(env: Environment, xy: np.ndarray) -> np.ndarray:
    """(T, B) dBm for positions ``xy`` of shape (T, 2)."""
    d = np.linalg.norm(np.asarray(xy)[:, None, :] - env.beacons[None, :, :], axis=2)
    d = np.maximum(d, MIN_DISTANCE_M)
    return env.measured_power_dbm - 10.0 * env.path_loss_exponent * np.log10(d)


def random_walk(
    env: Environment,
    duration_s: int,
    speed_range: tuple[float, float] = (1.0, 1.2),
    seed: int = 0,
    start: tuple[float, float] | None = None,
    start_time: int = 0,
    max_tries: int = 64,
) -> Trajectory:
    """Correlated random walk on a 1 Hz grid that never leaves ``env.bounds``."""
    xmin, ymin, xmax, ymax = env.bounds
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("environment bounds are empty")
    if duration_s < 1:
        raise ValueError("duration must be >= 1 s")
    lo, hi = speed_range
    if lo < 0 or hi < lo:
        raise ValueError("speed range must satisfy 0 <= lo <= hi")
    rng = np.random.default_rng(seed)
    xy = np.empty((duration_s, 2))
    if start is None:
        xy[0] = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
    else:
        xy[0] = start
    heading = rng.uniform(0.0, 2.0 * np.pi)
    centre = np.array([(xmin + xmax) / 2.0, (ymin + ymax) / 2.0])
    for k in range(1, duration_s):
        speed = rng.uniform(lo, hi)
        heading += rng.normal(0.0, 0.4)
        for attempt in range(max_tries):
            step = speed * np.array([np.cos(heading), np.sin(heading)])
            nxt = xy[k - 1] + step
            if xmin <= nxt[0] <= xmax and ymin <= nxt[1] <= ymax:
                break
            heading = rng.uniform(0.0, 2.0 * np.pi)
        else:
            to_c = centre - xy[k - 1]
            dist = np.linalg.norm(to_c)
            nxt = xy[k - 1] + (to_c / dist * min(speed, dist) if dist > 0 else 0.0)
        xy[k] = nxt
    return Trajectory(np.arange(start_time, start_time + duration_s, dtype=np.int64), xy)


def _streams(seed: int) -> tuple[np.random.Generator, ...]:
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))


def synth_dbm(env: Environment, profile: PhoneProfile, traj: Trajectory, seed: int) -> np.ndarray:
    """Received dBm before detection thresholding, drops and failures."""
    noise_rng = _streams(seed)[0]
    ideal = path_loss_matrix(env, traj.xy)
    noise = noise_rng.standard_normal(ideal.shape) * np.sqrt(profile.noise_var)
    return ideal + profile.gain_offset_db + noise


def failure_mask(profile: PhoneProfile, n: int, seed: int) -> np.ndarray:
    """Boolean (n,) mask of seconds in receiver failure."""
    rng = _streams(seed)[2]
    hazard = rng.random(n)
    mask = np.zeros(n, dtype=bool)
    if profile.failure_rate <= 0:
        return mask
    p = 1.0 / profile.mean_dead_time_s
    k = 0
    prev_failed = False
    while k < n:
        if not prev_failed and hazard[k] < profile.failure_rate:
            length = int(rng.geometric(p))
            mask[k : k + length] = True
            k += length
            prev_failed = True
        else:
            prev_failed = False
            k += 1
    return mask


def synth_run(
    env: Environment,
    profile: PhoneProfile,
    traj: Trajectory,
    seed: int,
    phone: PhoneModelId | None = None,
    split: Split = Split.TRAIN,
    run_id: str = "",
    labeled: bool = True,
) -> Run:
    """Simulate one phone walking ``traj``; identical arguments give an identical run."""
    _, drop_rng, _, _ = _streams(seed)
    dbm = synth_dbm(env, profile, traj, seed)
    rssi = shift_rssi(np.where(dbm > RSSI_FLOOR_DBM, dbm, np.nan))
    drops = drop_rng.random(rssi.shape) < profile.per_beacon_drop_rate
    rssi[drops] = 0.0
    rssi[failure_mask(profile, len(traj), seed)] = 0.0
    phone = phone or PhoneModelId("synthetic", Brand.APPLE)
    return Run(phone, traj.times.copy(), rssi, traj.xy.copy() if labeled else None, split, run_id)


# -- catalogs and whole-dataset generation -----------------------------------------


@dataclass(frozen=True)
class PhoneEntry:
    phone: PhoneModelId
    profile: PhoneProfile


def _profile_from_dict(d: Mapping[str, Any]) -> PhoneProfile:
    drop = float(d.get("per_beacon_drop_rate", 0.0))
    gain = float(d.get("gain_offset_db", 0.0))
    var = float(d.get("noise_var", 0.0))
    if "failure_pct" in d:
        return PhoneProfile.from_receiver_stats(
            float(d["failure_pct"]),
            float(d.get("dead_time_s", 1.0)),
            gain_offset_db=gain,
            noise_var=var,
            per_beacon_drop_rate=drop,
        )
    return PhoneProfile(gain, var, float(d.get("failure_rate", 0.0)), float(d.get("mean_dead_time_s", 1.0)), drop)


def load_phone_catalog(source: str | Path | Sequence[Mapping[str, Any]] | None = None) -> list[PhoneEntry]:
    """Phone profiles from a JSON list (or the packaged 15-phone reference catalog)."""
    if source is None:
        items = json.loads(resources.files("blescope.data").joinpath("phone_catalog.json").read_text())
        items = items["phones"]
    elif isinstance(source, (str, Path)):
        items = json.loads(Path(source).read_text())
        items = items["phones"] if isinstance(items, dict) else items
    else:
        items = source
    out = []
    for i, d in enumerate(items):
        out.append(PhoneEntry(PhoneModelId(d["name"], Brand.parse(d["brand"]), i), _profile_from_dict(d)))
    return out


@dataclass(frozen=True)
class DatasetPlan:
    train_seconds: int = 3000
    val_seconds: int = 300
    test_seconds: int = 600
    unlabeled_seconds: int = 0
    run_length: int = 300
    speed_range: tuple[float, float] = (1.0, 1.2)
    unlabeled_brands: tuple[str, ...] = ()
    gap_s: int = 60

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DatasetPlan":
        kw = dict(d)
        if "speed_range" in kw:
            kw["speed_range"] = tuple(kw["speed_range"])
        if "unlabeled_brands" in kw:
            kw["unlabeled_brands"] = tuple(kw["unlabeled_brands"])
        return cls(**kw)


@dataclass
class SimConfig:
    environment: Environment
    phones: list[PhoneEntry]
    plan: DatasetPlan = field(default_factory=DatasetPlan)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SimConfig":
        return cls(
            Environment.from_dict(d["environment"]),
            load_phone_catalog(d["phones"]) if "phones" in d else load_phone_catalog(),
            DatasetPlan.from_dict(d.get("plan", {})),
        )

    @classmethod
    def load(cls, path: str | Path | None = None) -> "SimConfig":
        if path is None:
            text = resources.files("blescope.data").joinpath("benchmark.json").read_text()
        else:
            text = Path(path).read_text()
        d = json.loads(text)
        return cls.from_dict(d.get("simulation", d))

    def to_dict(self) -> dict[str, Any]:
        env = self.environment
        return {
            "environment": {
                "beacon_positions": [list(p) for p in env.beacon_positions],
                "bounds": list(env.bounds),
                "tx_power_dbm": env.tx_power_dbm,
                "measured_power_dbm": env.measured_power_dbm,
                "path_loss_exponent": env.path_loss_exponent,
            },
            "phones": [
                {"name": e.phone.name, "brand": e.phone.brand.value, **asdict(e.profile)} for e in self.phones
            ],
            "plan": asdict(self.plan),
        }


def _runs_for(
    env: Environment,
    entry: PhoneEntry,
    seconds: int,
    split: Split,
    plan: DatasetPlan,
    seed_seq: np.random.SeedSequence,
    clock: list[int],
    tag: str,
    labeled: bool = True,
) -> list[Run]:
    runs = []
    remaining = seconds
    k = 0
    while remaining > 0:
        length = min(plan.run_length, remaining)
        walk_seed, run_seed = (int(s.generate_state(1)[0]) for s in seed_seq.spawn(2))
        traj = random_walk(env, length, plan.speed_range, walk_seed, start_time=clock[0])
        clock[0] += length + plan.gap_s
        run_id = f"{entry.phone.name.replace(' ', '_')}_{tag}{k}"
        runs.append(synth_run(env, entry.profile, traj, run_seed, entry.phone, split, run_id, labeled))
        remaining -= length
        k += 1
    return runs


def simulate_dataset(cfg: SimConfig, seed: int = 0) -> list[Run]:
    """Train/val/test runs for every phone, plus unlabeled runs for the configured brands.

    Unlabeled runs carry the train tag (they are training inputs) with their
    locations removed. Every phone keeps its own clock so no (phone, second)
    pair is shared between runs.
    """
    plan = cfg.plan
    unl = {Brand.parse(b) for b in plan.unlabeled_brands}
    root = np.random.SeedSequence(seed)
    runs: list[Run] = []
    for entry, ss in zip(cfg.phones, root.spawn(len(cfg.phones))):
        s_train, s_val, s_test, s_unl = ss.spawn(4)
        clock = [0]
        runs += _runs_for(cfg.environment, entry, plan.train_seconds, Split.TRAIN, plan, s_train, clock, "train")
        runs += _runs_for(cfg.environment, entry, plan.val_seconds, Split.VAL, plan, s_val, clock, "val")
        runs += _runs_for(cfg.environment, entry, plan.test_seconds, Split.TEST, plan, s_test, clock, "test")
        if entry.phone.brand in unl and plan.unlabeled_seconds > 0:
            runs += _runs_for(
                cfg.environment, entry, plan.unlabeled_seconds, Split.TRAIN, plan, s_unl, clock, "unl", labeled=False
            )
    return runs
