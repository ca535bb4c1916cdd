"""Localization error metrics, reports and CDF export."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import DataHygieneError, Location, Run, Split, WindowSet, require_splits, windows_from_runs

# Published figures for the original private dataset. Shown for orientation
# only; synthetic benchmarks are not expected to match them.
REFERENCE_FIGURES: Mapping[str, float] = {
    "overall mean AE, scenario 2 (m)": 1.37,
    "iPhone XR mean AE (m)": 0.84,
    "Mate20 Pro mean AE, scenario 3 (m)": 1.63,
}


def absolute_error(pred: Location | Sequence[float], truth: Location | Sequence[float]) -> float:
    p = pred.as_array() if isinstance(pred, Location) else np.asarray(pred, dtype=np.float64)
    t = truth.as_array() if isinstance(truth, Location) else np.asarray(truth, dtype=np.float64)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise ValueError("locations must be finite")
    return float(np.hypot(*(p - t)))


@dataclass(frozen=True)
class ErrorSummary:
    n: int
    mean: float
    std: float
    median: float
    p90: float
    max: float

    @classmethod
    def of(cls, errors: np.ndarray) -> "ErrorSummary":
        e = np.asarray(errors, dtype=np.float64)
        if e.size == 0:
            raise ValueError("no errors to summarise")
        return cls(
            int(e.size),
            float(e.mean()),
            float(e.std()),
            float(np.percentile(e, 50)),
            float(np.percentile(e, 90)),
            float(e.max()),
        )


@dataclass(frozen=True)
class EvalReport:
    method: str
    scenario: str
    overall: ErrorSummary
    per_phone: dict[str, ErrorSummary]
    errors: tuple[float, ...] = field(repr=False)
    references: dict[str, float] = field(default_factory=lambda: dict(REFERENCE_FIGURES))

    def cdf(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted errors and the cumulative fraction at each."""
        e = np.sort(np.asarray(self.errors))
        return e, np.arange(1, e.size + 1) / e.size

    def mean_for(self, phones: Sequence[str]) -> float:
        """Mean AE pooled over the named phones' test windows."""
        stats = [self.per_phone[p] for p in phones]
        n = sum(s.n for s in stats)
        return sum(s.mean * s.n for s in stats) / n

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        d = self.to_dict()
        d["errors"] = list(self.errors)
        return json.dumps(d, indent=2)

    def format_table(self) -> str:
        head = f"{'phone':<20}{'n':>7}{'mean':>9}{'std':>9}"
        lines = [f"method={self.method} scenario={self.scenario}", head, "-" * len(head)]
        for name, s in sorted(self.per_phone.items()):
            lines.append(f"{name:<20}{s.n:>7d}{s.mean:>9.3f}{s.std:>9.3f}")
        o = self.overall
        lines.append("-" * len(head))
        lines.append(f"{'overall':<20}{o.n:>7d}{o.mean:>9.3f}{o.std:>9.3f}")
        lines.append(f"median {o.median:.3f}  p90 {o.p90:.3f}  max {o.max:.3f}")
        lines.append("published reference figures (not comparable to synthetic data):")
        for k, v in self.references.items():
            lines.append(f"  {k}: {v:.2f}")
        return "\n".join(lines)


def _test_windows(test: Sequence[Run] | WindowSet, history: int) -> WindowSet:
    if isinstance(test, WindowSet):
        if any(Split(s) is not Split.TEST for s in np.unique(test.split)):
            raise DataHygieneError("evaluation windows must come from the test split")
        return test
    runs = list(test)
    require_splits(runs, {Split.TEST}, "evaluation")
    return windows_from_runs(runs, history, labeled=True)


def evaluate(
    model: Callable[[np.ndarray], np.ndarray],
    test: Sequence[Run] | WindowSet,
    method: str = "",
    scenario: str = "",
    history: int = 5,
) -> EvalReport:
    """Run ``model`` on every test window and summarise the absolute errors."""
    ws = _test_windows(test, history)
    if len(ws) == 0:
        raise ValueError("test split has no windows")
    pred = np.asarray(model(ws.x), dtype=np.float64)
    if pred.shape != ws.y.shape:
        raise ValueError(f"model returned {pred.shape}, expected {ws.y.shape}")
    err = np.hypot(pred[:, 0] - ws.y[:, 0], pred[:, 1] - ws.y[:, 1])
    per_phone = {str(p): ErrorSummary.of(err[ws.phone == p]) for p in np.unique(ws.phone)}
    return EvalReport(method, scenario, ErrorSummary.of(err), per_phone, tuple(float(e) for e in err))


def export_cdf(report: EvalReport, path: str | Path) -> Path:
    """Two-column CSV of sorted error and cumulative fraction."""
    if not report.errors:
        raise ValueError("empty report")
    e, frac = report.cdf()
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["error_m", "cumulative_fraction"])
        for a, b in zip(e, frac):
            w.writerow([repr(float(a)), repr(float(b))])
    return path
