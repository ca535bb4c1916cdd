"""Domain types, run ingestion, sliding windows and split bookkeeping."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TypeVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_BEACONS = 47
DEFAULT_HISTORY = 5
RSSI_FLOOR_DBM = -100.0


class Brand(str, Enum):
    APPLE = "Apple"
    SAMSUNG = "Samsung"
    GOOGLE = "Google"
    HUAWEI = "Huawei"
    XIAOMI = "Xiaomi"

    @classmethod
    def parse(cls, value: "str | Brand") -> "Brand":
        if isinstance(value, Brand):
            return value
        for b in cls:
            if b.value.lower() == str(value).strip().lower():
                return b
        raise ValueError(f"unknown brand {value!r}")


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class DataHygieneError(RuntimeError):
    """A training or tuning step was handed data it must never read."""


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class PhoneModelId:
    name: str
    brand: Brand
    index: int = -1


@dataclass(frozen=True)
class Location:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("location must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True, eq=False)
class RssiWindow:
    """B x H shifted RSSI, columns oldest to newest."""

    values: np.ndarray
    phone: PhoneModelId
    end_time: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("window values must be a B x H matrix")
        if np.any(v < 0):
            raise ValueError("shifted RSSI must be non-negative")
        object.__setattr__(self, "values", v)

    @property
    def n_beacons(self) -> int:
        return self.values.shape[0]

    @property
    def history(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "RssiWindow":
        return replace(self, values=values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RssiWindow):
            return NotImplemented
        return (
            self.phone == other.phone
            and self.end_time == other.end_time
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class LabeledSample:
    window: RssiWindow
    location: Location

    @property
    def phone(self) -> PhoneModelId:
        return self.window.phone


@dataclass(frozen=True)
class UnlabeledSample:
    window: RssiWindow

    @property
    def phone(self) -> PhoneModelId:
        return self.window.phone


@dataclass(eq=False)
class Run:
    """One phone's continuous recording on a 1 Hz grid.

    ``rssi`` is (T, B) shifted RSSI; ``locations`` is (T, 2) or None for an
    unlabeled run.
    """

    phone: PhoneModelId
    times: np.ndarray
    rssi: np.ndarray
    locations: np.ndarray | None = None
    split: Split = Split.TRAIN
    run_id: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.rssi = np.asarray(self.rssi, dtype=np.float64)
        if self.rssi.ndim != 2 or self.rssi.shape[0] != self.times.shape[0]:
            raise ValueError("rssi must be (T, B) with one row per timestamp")
        if self.times.size > 1 and np.any(np.diff(self.times) != 1):
            raise ValueError("run timestamps must advance by exactly 1 s")
        if np.any(self.rssi < 0):
            raise ValueError("shifted RSSI must be non-negative")
        if self.locations is not None:
            self.locations = np.asarray(self.locations, dtype=np.float64)
            if self.locations.shape != (self.times.size, 2):
                raise ValueError("locations must be (T, 2)")
        self.split = Split(self.split)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def n_beacons(self) -> int:
        return self.rssi.shape[1]

    @property
    def labeled(self) -> bool:
        return self.locations is not None

    @property
    def brand(self) -> Brand:
        return self.phone.brand

    def unlabeled(self) -> "Run":
        return replace(self, locations=None)


# -- RSSI encoding --------------------------------------------------------------


def shift_rssi(dbm, floor_dbm: float = RSSI_FLOOR_DBM) -> np.ndarray:
    """dBm to non-negative units: max(0, dBm - floor). NaN (not heard) maps to 0."""
    arr = np.asarray(dbm, dtype=np.float64)
    out = np.maximum(arr - floor_dbm, 0.0)
    return np.where(np.isnan(out), 0.0, out)


def unshift_rssi(shifted, floor_dbm: float = RSSI_FLOOR_DBM) -> np.ndarray:
    """Inverse of ``shift_rssi`` for detected beacons; zeros come back as NaN."""
    arr = np.asarray(shifted, dtype=np.float64)
    return np.where(arr > 0, arr + floor_dbm, np.nan)


# -- CSV runs and manifests -----------------------------------------------------

DEFAULT_SCHEMA = {"t": "t", "phone": "phone", "brand": "brand", "x": "x", "y": "y", "beacon_prefix": "b"}


def _cell_float(text: str, line: int, col: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise IngestError(f"line {line}: column {col!r} is not a number: {text!r}") from None


def ingest_run(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    n_beacons: int | None = None,
    split: Split | str = Split.TRAIN,
    floor_dbm: float = RSSI_FLOOR_DBM,
) -> Run:
    """Read a run CSV (``t,phone,brand,x,y,b0..b{B-1}``; RSSI in dBm, blank = not heard).

    Missing seconds inside the run are filled with all-zero RSSI and linearly
    interpolated locations.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        col = {name: i for i, name in enumerate(header)}
        for key in ("t", "phone", "brand"):
            if schema[key] not in col:
                raise IngestError(f"line 1: missing column {schema[key]!r}")
        prefix = schema["beacon_prefix"]
        beacon_cols = []
        b = 0
        while f"{prefix}{b}" in col:
            beacon_cols.append(col[f"{prefix}{b}"])
            b += 1
        if n_beacons is not None and len(beacon_cols) != n_beacons:
            raise IngestError(f"line 1: expected {n_beacons} beacon columns, found {len(beacon_cols)}")
        if not beacon_cols:
            raise IngestError("line 1: no beacon columns")
        has_xy = schema["x"] in col and schema["y"] in col

        times: list[int] = []
        rows: list[list[float]] = []
        locs: list[tuple[float, float]] = []
        phone_name = brand = None
        for line, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise IngestError(f"line {line}: expected {len(header)} fields, got {len(row)}")
            t = _cell_float(row[col[schema["t"]]], line, schema["t"])
            if not math.isfinite(t) or t != round(t):
                raise IngestError(f"line {line}: timestamp must be an integer second")
            t = int(round(t))
            if times and t <= times[-1]:
                raise IngestError(f"line {line}: timestamps not strictly increasing ({t} after {times[-1]})")
            name = row[col[schema["phone"]]].strip()
            br = row[col[schema["brand"]]].strip()
            if phone_name is None:
                phone_name, brand = name, br
            elif (name, br) != (phone_name, brand):
                raise IngestError(f"line {line}: a run must come from a single phone")
            rows.append([_cell_float(row[c], line, header[c]) for c in beacon_cols])
            if has_xy:
                locs.append(
                    (
                        _cell_float(row[col[schema["x"]]], line, schema["x"]),
                        _cell_float(row[col[schema["y"]]], line, schema["y"]),
                    )
                )
            times.append(t)

    if not times:
        raise IngestError(f"{path}: no data rows")
    try:
        phone = PhoneModelId(phone_name, Brand.parse(brand))
    except ValueError as exc:
        raise IngestError(f"line 2: {exc}") from None

    raw = shift_rssi(np.array(rows), floor_dbm)
    t_arr = np.array(times)
    full_t = np.arange(t_arr[0], t_arr[-1] + 1)
    rssi = np.zeros((full_t.size, raw.shape[1]))
    rssi[t_arr - t_arr[0]] = raw

    locations = None
    if has_xy:
        xy = np.array(locs)
        have = np.isfinite(xy).all(axis=1)
        if have.all():
            locations = np.column_stack(
                [np.interp(full_t, t_arr, xy[:, 0]), np.interp(full_t, t_arr, xy[:, 1])]
            )
        elif have.any():
            bad = int(np.flatnonzero(~have)[0]) + 2
            raise IngestError(f"line {bad}: run mixes labeled and unlabeled rows")
    return Run(phone, full_t, rssi, locations, Split(split), run_id=path.stem)


def write_run(run: Run, path: str | Path, floor_dbm: float = RSSI_FLOOR_DBM) -> None:
    """Write ``run`` in the CSV layout read by ``ingest_run``."""
    dbm = unshift_rssi(run.rssi, floor_dbm)
    header = ["t", "phone", "brand", "x", "y"] + [f"b{i}" for i in range(run.n_beacons)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(run.times):
            if run.locations is not None:
                xy = [repr(float(run.locations[k, 0])), repr(float(run.locations[k, 1]))]
            else:
                xy = ["", ""]
            cells = ["" if np.isnan(v) else repr(float(v)) for v in dbm[k]]
            w.writerow([int(t), run.phone.name, run.phone.brand.value, *xy, *cells])


def write_manifest(path: str | Path, entries: Sequence[Mapping[str, str]], n_beacons: int) -> None:
    Path(path).write_text(json.dumps({"n_beacons": n_beacons, "runs": list(entries)}, indent=2))


def load_manifest(path: str | Path, splits: Iterable[Split | str] | None = None) -> list[Run]:
    """Load the runs listed in a manifest; relative paths resolve against its folder."""
    path = Path(path)
    spec = json.loads(path.read_text())
    wanted = None if splits is None else {Split(s) for s in splits}
    runs = []
    for entry in spec["runs"]:
        split = Split(entry["split"])
        if wanted is not None and split not in wanted:
            continue
        run_path = Path(entry["path"])
        if not run_path.is_absolute():
            run_path = path.parent / run_path
        run = ingest_run(run_path, n_beacons=spec.get("n_beacons"), split=split)
        if entry.get("unlabeled"):
            run = run.unlabeled()
        runs.append(run)
    return runs


# -- windows ---------------------------------------------------------------------


def make_windows(run: Run, history: int = DEFAULT_HISTORY) -> list[LabeledSample] | list[UnlabeledSample]:
    """Stride-1 sliding windows; a window ending at second t is labeled with x_t."""
    if history < 1:
        raise ValueError("history must be >= 1")
    out: list = []
    for end in range(history - 1, len(run)):
        w = RssiWindow(run.rssi[end - history + 1 : end + 1].T.copy(), run.phone, int(run.times[end]))
        if run.locations is None:
            out.append(UnlabeledSample(w))
        else:
            out.append(LabeledSample(w, Location(*map(float, run.locations[end]))))
    return out


@dataclass
class WindowSet:
    """Array form of many windows: ``x`` is (N, B, H) shifted RSSI.

    ``prev`` holds, for every window, the index of the window one second
    earlier from the same run, or -1.
    """

    x: np.ndarray
    y: np.ndarray | None
    phone: np.ndarray
    brand: np.ndarray
    run_index: np.ndarray
    end_time: np.ndarray
    split: np.ndarray
    prev: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.prev is None:
            self.prev = _predecessors(self.run_index, self.end_time)

    def __len__(self) -> int:
        return int(self.x.shape[0])

    @property
    def labeled(self) -> bool:
        return self.y is not None

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx)
        return WindowSet(
            self.x[idx],
            None if self.y is None else self.y[idx],
            self.phone[idx],
            self.brand[idx],
            self.run_index[idx],
            self.end_time[idx],
            self.split[idx],
        )


def _predecessors(run_index: np.ndarray, end_time: np.ndarray) -> np.ndarray:
    prev = np.full(run_index.shape, -1, dtype=np.int64)
    lookup = {(int(r), int(t)): i for i, (r, t) in enumerate(zip(run_index, end_time))}
    for i, (r, t) in enumerate(zip(run_index, end_time)):
        prev[i] = lookup.get((int(r), int(t) - 1), -1)
    return prev


def windows_from_runs(runs: Sequence[Run], history: int = DEFAULT_HISTORY, labeled: bool | None = None) -> WindowSet:
    """Stack every stride-1 window of ``runs``; labels kept only if every run has them."""
    xs, ys, phones, brands, run_idx, ends, splits = [], [], [], [], [], [], []
    if labeled is None:
        labeled = bool(runs) and all(r.labeled for r in runs)
    n_beacons = runs[0].n_beacons if runs else 0
    for k, run in enumerate(runs):
        if len(run) < history:
            continue
        if labeled and not run.labeled:
            raise ValueError(f"run {run.run_id!r} has no locations")
        # (T-H+1, B, H), columns oldest to newest
        win = sliding_window_view(run.rssi, history, axis=0)
        xs.append(np.ascontiguousarray(win))
        n = win.shape[0]
        if labeled:
            ys.append(run.locations[history - 1 :])
        phones.append(np.full(n, run.phone.name, dtype=object))
        brands.append(np.full(n, run.phone.brand.value, dtype=object))
        run_idx.append(np.full(n, k, dtype=np.int64))
        ends.append(run.times[history - 1 :])
        splits.append(np.full(n, run.split.value, dtype=object))
    if not xs:
        return WindowSet(
            np.zeros((0, n_beacons, history)),
            np.zeros((0, 2)) if labeled else None,
            np.zeros(0, dtype=object),
            np.zeros(0, dtype=object),
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=object),
        )
    return WindowSet(
        np.concatenate(xs),
        np.concatenate(ys) if labeled else None,
        np.concatenate(phones),
        np.concatenate(brands),
        np.concatenate(run_idx),
        np.concatenate(ends),
        np.concatenate(splits),
    )


# -- dataset selection and hygiene -----------------------------------------------

T = TypeVar("T")


def restrict_dataset(data: Iterable[T], brands: Iterable[Brand | str]) -> list[T]:
    """Keep items (samples or runs) whose phone brand is in ``brands``; order preserved."""
    allowed = {Brand.parse(b) for b in brands}
    if not allowed:
        raise ValueError("brands must be nonempty")
    return [item for item in data if item.phone.brand in allowed]


def require_splits(runs: Iterable[Run], allowed: Iterable[Split], context: str) -> None:
    """Fail loudly if any run carries a split tag outside ``allowed``."""
    allowed = set(allowed)
    for run in runs:
        if run.split not in allowed:
            raise DataHygieneError(
                f"{context}: run {run.run_id or run.phone.name!r} is tagged {run.split.value!r}; "
                f"only {sorted(s.value for s in allowed)} may be read here"
            )


def check_disjoint_splits(runs: Iterable[Run]) -> None:
    seen: dict[tuple[str, int], Split] = {}
    for run in runs:
        for t in run.times:
            key = (run.phone.name, int(t))
            other = seen.get(key)
            if other is not None and other != run.split:
                raise DataHygieneError(f"{key} appears in both {other.value} and {run.split.value}")
            seen[key] = run.split
