"""Training loops for the three data regimes.

Scenario 1: LocNet on labeled data from every phone.
Scenario 2: TransNet + LocNet on labeled data from the known brands, with
            smoothness and statistic-similarity regularisers.
Scenario 3: scenario 2, then a second phase that adds the label-free terms
            on unlabeled windows from unseen phones.
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .augment import AugmentConfig, augment_runs
from .core import (
    Brand,
    DataHygieneError,
    Run,
    Split,
    WindowSet,
    require_splits,
    restrict_dataset,
    windows_from_runs,
)
from .model import DEFAULT_LOG_WEIGHT_CAP, Localizer, LossWeights, loss_loc, loss_ps, loss_ssl, loss_ts
from .nn import ModelParams, NonFiniteGradientError, Tensor, adam_step, state_digest
from .stats import StatMatrix, compute_stat_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhaseConfig:
    epochs: int = 50
    lr: float = 1e-4
    batch_size: int = 256


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: int = 2
    known_brands: tuple[Brand, ...] = (Brand.APPLE, Brand.SAMSUNG)
    target_brand: Brand = Brand.APPLE
    unlabeled_brands: tuple[Brand, ...] = (Brand.XIAOMI,)
    weights: LossWeights = field(default_factory=LossWeights)
    phase1: PhaseConfig = field(default_factory=PhaseConfig)
    phase2: PhaseConfig = field(default_factory=lambda: PhaseConfig(epochs=20, lr=1e-5))
    history: int = 5
    hidden: int = 128
    dense_hidden: int = 64
    channels: tuple[int, int, int] = (64, 32, 16)
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)
    mask_unsupported: bool = True
    log_weight_cap: float = DEFAULT_LOG_WEIGHT_CAP
    freeze_transnet: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in (1, 2, 3):
            raise ValueError("scenario must be 1, 2 or 3")
        known = tuple(Brand.parse(b) for b in self.known_brands)
        unl = tuple(Brand.parse(b) for b in self.unlabeled_brands)
        target = Brand.parse(self.target_brand)
        object.__setattr__(self, "known_brands", known)
        object.__setattr__(self, "unlabeled_brands", unl)
        object.__setattr__(self, "target_brand", target)
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.scenario in (2, 3):
            if not known or set(known) == set(Brand):
                raise ValueError("known_brands must be a proper, nonempty subset of all brands")
            if target not in known:
                raise ValueError("target brand must be one of the known brands")
        if self.scenario == 3 and set(unl) & set(known):
            raise ValueError("unlabeled brands must be disjoint from known brands")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "weights" in d:
            d["weights"] = LossWeights(**d["weights"])
        for key in ("phase1", "phase2"):
            if key in d:
                d[key] = PhaseConfig(**d[key])
        if "augment" in d:
            d["augment"] = None if d["augment"] is None else AugmentConfig(**d["augment"])
        for key in ("known_brands", "unlabeled_brands", "channels"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["known_brands"] = [b.value for b in self.known_brands]
        d["unlabeled_brands"] = [b.value for b in self.unlabeled_brands]
        d["target_brand"] = self.target_brand.value
        return d


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None = None
    val_mean_ae: float | None = None
    ps_skipped: int = 0


@dataclass
class TrainReport:
    scenario: int
    phase: str
    epochs: list[EpochRecord] = field(default_factory=list)
    steps: int = 0
    checkpoint_id: str = ""
    aborted: bool = False
    abort_reason: str = ""
    wall_clock_s: float = field(default=0.0, compare=False)

    @property
    def train_losses(self) -> list[float]:
        return [e.train_loss for e in self.epochs]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class TrainingAborted(RuntimeError):
    """Training hit a non-finite loss or gradient; ``localizer`` holds the last finite state."""

    def __init__(self, msg: str, report: TrainReport, localizer: Localizer):
        super().__init__(msg)
        self.report = report
        self.localizer = localizer


# -- batching ------------------------------------------------------------------------


@dataclass
class Batch:
    index: np.ndarray
    prev_pos: np.ndarray  # position in the batch of the window one second earlier, or -1


def make_batches(ws: WindowSet, batch_size: int, rng: np.random.Generator) -> list[Batch]:
    """Shuffle consecutive-window pairs (plus leftovers) into batches; pairs never split.

    Pair boundaries shift by a random 0/1 offset per run each epoch.
    """
    n = len(ws)
    if n == 0:
        return []
    units: list[tuple[int, ...]] = []
    run_breaks = np.flatnonzero(np.diff(ws.run_index) != 0) + 1
    starts = np.concatenate([[0], run_breaks])
    ends = np.concatenate([run_breaks, [n]])
    offsets = rng.integers(0, 2, size=starts.size)
    for a, b, off in zip(starts, ends, offsets):
        k = int(a)
        if off and k < b:
            units.append((k,))
            k += 1
        while k < b:
            if k + 1 < b and ws.prev[k + 1] == k:
                units.append((k, k + 1))
                k += 2
            else:
                units.append((k,))
                k += 1
    order = rng.permutation(len(units))
    batches: list[Batch] = []
    idx: list[int] = []
    prev: list[int] = []
    for u in order:
        unit = units[u]
        if idx and len(idx) + len(unit) > batch_size:
            batches.append(Batch(np.array(idx), np.array(prev)))
            idx, prev = [], []
        if len(unit) == 2:
            prev += [-1, len(idx)]
        else:
            prev.append(-1)
        idx += list(unit)
    if idx:
        batches.append(Batch(np.array(idx), np.array(prev)))
    return batches


# -- objective -------------------------------------------------------------------------


@dataclass
class ObjectiveParts:
    total: Tensor
    loc: float = 0.0
    ps: float = 0.0
    ssl: float = 0.0
    ts: float = 0.0
    ps_pairs: int = 0


def batch_objective(
    localizer: Localizer,
    x: np.ndarray,
    y: np.ndarray | None,
    prev_pos: np.ndarray,
    weights: LossWeights,
    stats: StatMatrix | None,
    mask_unsupported: bool = True,
    log_weight_cap: float = DEFAULT_LOG_WEIGHT_CAP,
) -> ObjectiveParts:
    """Batch mean of the weighted per-window losses; L_loc only when labels are given."""
    xs, g, pred = localizer.forward(x)
    n = x.shape[0]
    total = Tensor(0.0)
    parts = ObjectiveParts(total)
    if y is not None and weights.w_loc > 0:
        l = loss_loc(pred, y).mean()
        total = total + l * weights.w_loc
        parts.loc = float(l.data)
    cur = np.flatnonzero(prev_pos >= 0)
    parts.ps_pairs = int(cur.size)
    if weights.w_ps > 0 and cur.size:
        l = loss_ps(pred[cur], pred[prev_pos[cur]]).sum() * (1.0 / n)
        total = total + l * weights.w_ps
        parts.ps = float(l.data)
    if localizer.transnet is not None:
        if weights.w_ssl > 0:
            if stats is None:
                raise ValueError("statistic similarity loss needs a statistics matrix")
            m = stats.scaled(localizer.scale)
            l = loss_ssl(
                g, xs, m, weights.tau, mask=True if mask_unsupported else None, log_weight_cap=log_weight_cap
            ).mean()
            total = total + l * weights.w_ssl
            parts.ssl = float(l.data)
        if weights.w_ts > 0:
            l = loss_ts(g).mean()
            total = total + l * weights.w_ts
            parts.ts = float(l.data)
    parts.total = total
    return parts


# -- core loop ---------------------------------------------------------------------------


def _val_metrics(localizer: Localizer, val: WindowSet | None) -> tuple[float | None, float | None]:
    if val is None or len(val) == 0:
        return None, None
    pred = localizer.predict(val.x)
    err2 = np.sum((pred - val.y) ** 2, axis=1)
    return float(err2.mean()), float(np.sqrt(err2).mean())


def _train_loop(
    localizer: Localizer,
    labeled: WindowSet,
    phase: PhaseConfig,
    weights: LossWeights,
    stats: StatMatrix | None,
    cfg: ScenarioConfig,
    report: TrainReport,
    seed_seq: np.random.SeedSequence,
    val: WindowSet | None = None,
    unlabeled: WindowSet | None = None,
) -> None:
    modules = dict(localizer.modules())
    if cfg.freeze_transnet:
        modules["trans"] = None
    params = ModelParams.from_modules(**modules)
    every = ModelParams.from_modules(**localizer.modules())
    lab_ss, unl_ss = seed_seq.spawn(2)
    rng = np.random.default_rng(lab_ss)
    urng = np.random.default_rng(unl_ss)
    use_unl = unlabeled is not None and len(unlabeled) > 0 and weights.w_u > 0
    unl_queue: list[Batch] = []
    start = time.perf_counter()

    for epoch in range(phase.epochs):
        total, count, skipped = 0.0, 0, 0
        for batch in make_batches(labeled, phase.batch_size, rng):
            every.zero_grad()
            parts = batch_objective(
                localizer,
                labeled.x[batch.index],
                labeled.y[batch.index],
                batch.prev_pos,
                weights,
                stats,
                cfg.mask_unsupported,
                cfg.log_weight_cap,
            )
            objective = parts.total
            skipped += int(batch.index.size - 2 * parts.ps_pairs)
            if use_unl:
                if not unl_queue:
                    unl_queue = make_batches(unlabeled, phase.batch_size, urng)
                ub = unl_queue.pop()
                uparts = batch_objective(
                    localizer,
                    unlabeled.x[ub.index],
                    None,
                    ub.prev_pos,
                    weights,
                    stats,
                    cfg.mask_unsupported,
                    cfg.log_weight_cap,
                )
                objective = objective + uparts.total * weights.w_u
            value = float(objective.data)
            if not np.isfinite(value):
                report.aborted = True
                report.abort_reason = f"non-finite loss at epoch {epoch}, step {report.steps}"
                report.wall_clock_s += time.perf_counter() - start
                report.checkpoint_id = state_digest(localizer.state_dict())
                raise TrainingAborted(report.abort_reason, report, localizer)
            if objective.requires_grad:
                objective.backward()
            try:
                adam_step(params, phase.lr)
            except NonFiniteGradientError as exc:
                report.aborted = True
                report.abort_reason = f"{exc} at epoch {epoch}, step {report.steps}"
                report.wall_clock_s += time.perf_counter() - start
                report.checkpoint_id = state_digest(localizer.state_dict())
                raise TrainingAborted(report.abort_reason, report, localizer) from exc
            report.steps += 1
            total += value * batch.index.size
            count += batch.index.size
        vloss, vae = _val_metrics(localizer, val)
        report.epochs.append(EpochRecord(epoch, total / max(count, 1), vloss, vae, skipped))
        log.debug("%s epoch %d loss %.5g val_ae %s", report.phase, epoch, total / max(count, 1), vae)
    every.zero_grad()
    report.wall_clock_s += time.perf_counter() - start
    report.checkpoint_id = state_digest(localizer.state_dict())


# -- data preparation ----------------------------------------------------------------------


def _labeled_windows(runs: Sequence[Run], cfg: ScenarioConfig, salt: int) -> WindowSet:
    runs = list(runs)
    if cfg.augment is not None:
        aug = replace(cfg.augment, seed=int(np.random.SeedSequence([cfg.seed, salt]).generate_state(1)[0]))
        runs = runs + augment_runs(runs, aug)
    return windows_from_runs(runs, cfg.history, labeled=True)


def _check_inputs(labeled: Sequence[Run], val: Sequence[Run] | None, context: str) -> None:
    require_splits(labeled, {Split.TRAIN}, context)
    if val is not None:
        require_splits(val, {Split.VAL}, f"{context} (validation)")
    for r in labeled:
        if not r.labeled:
            raise ValueError(f"{context}: run {r.run_id!r} has no locations")


def _val_windows(val: Sequence[Run] | None, history: int) -> WindowSet | None:
    if not val:
        return None
    return windows_from_runs(list(val), history, labeled=True)


def _seed_streams(cfg: ScenarioConfig) -> tuple[int, np.random.SeedSequence, np.random.SeedSequence]:
    root = np.random.SeedSequence(cfg.seed)
    init_ss, phase1_ss, phase2_ss = root.spawn(3)
    return int(init_ss.generate_state(1)[0]), phase1_ss, phase2_ss


def output_affine(y: np.ndarray) -> tuple[tuple[float, float], float]:
    """Label mean and pooled standard deviation, used to fix LocNet's output scale."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        return (0.0, 0.0), 1.0
    mu = y.mean(axis=0)
    sd = float(np.sqrt(np.mean((y - mu) ** 2)))
    return (float(mu[0]), float(mu[1])), (sd if sd > 0 else 1.0)


def build_localizer(
    cfg: ScenarioConfig,
    n_beacons: int,
    with_transnet: bool,
    out_offset: tuple[float, float] = (0.0, 0.0),
    out_scale: float = 1.0,
) -> Localizer:
    init_seed, _, _ = _seed_streams(cfg)
    return Localizer.build(
        n_beacons,
        init_seed,
        with_transnet,
        cfg.hidden,
        cfg.dense_hidden,
        cfg.channels,
        out_offset=out_offset,
        out_scale=out_scale,
    )


def brand_statistics(runs: Sequence[Run], brand: Brand) -> StatMatrix:
    """Statistics matrix from the raw (un-augmented) runs of ``brand``."""
    own = restrict_dataset(runs, [brand])
    if not own:
        raise ValueError(f"no labeled data for target brand {brand.value}; statistics undefined")
    return compute_stat_matrix(own, brand)


# -- public entry points --------------------------------------------------------------------


def train_scenario1(
    data: Sequence[Run],
    cfg: ScenarioConfig,
    val: Sequence[Run] | None = None,
) -> tuple[Localizer, TrainReport]:
    """LocNet alone, squared-error objective, on every labeled run given."""
    data = list(data)
    if not data:
        raise ValueError("no labeled training data")
    _check_inputs(data, val, "scenario 1 training")
    ws = _labeled_windows(data, cfg, salt=0)
    if len(ws) == 0:
        raise ValueError("no training windows (runs shorter than the history)")
    loc = build_localizer(cfg, data[0].n_beacons, False, *output_affine(ws.y))
    report = TrainReport(scenario=1, phase="supervised")
    weights = LossWeights(w_loc=1.0, w_ps=0.0, w_ssl=0.0, w_ts=0.0, w_u=0.0, tau=cfg.weights.tau)
    _, p1, _ = _seed_streams(cfg)
    _train_loop(loc, ws, cfg.phase1, weights, None, cfg, report, p1, _val_windows(val, cfg.history))
    return loc, report


def train_scenario2(
    data: Sequence[Run],
    cfg: ScenarioConfig,
    val: Sequence[Run] | None = None,
) -> tuple[Localizer, TrainReport]:
    """TransNet + LocNet jointly on the known-brand labeled runs."""
    data = list(data)
    _check_inputs(data, val, "scenario 2 training")
    known = restrict_dataset(data, cfg.known_brands)
    if not known:
        raise ValueError("no labeled data from the known brands")
    if val is not None:
        val = restrict_dataset(val, cfg.known_brands)
    stats = brand_statistics(known, cfg.target_brand)
    ws = _labeled_windows(known, cfg, salt=0)
    loc = build_localizer(cfg, known[0].n_beacons, True, *output_affine(ws.y))
    report = TrainReport(scenario=2, phase="supervised")
    _, p1, _ = _seed_streams(cfg)
    _train_loop(loc, ws, cfg.phase1, cfg.weights, stats, cfg, report, p1, _val_windows(val, cfg.history))
    return loc, report


def _clone(loc: Localizer, cfg: ScenarioConfig) -> Localizer:
    lc = loc.locnet.cfg
    out = build_localizer(cfg, lc.n_beacons, loc.transnet is not None, lc.out_offset, lc.out_scale)
    out.load_state_dict(loc.state_dict())
    return out


def continue_training(
    localizer: Localizer,
    labeled: Sequence[Run],
    cfg: ScenarioConfig,
    val: Sequence[Run] | None = None,
    unlabeled: Sequence[Run] | None = None,
) -> TrainReport:
    """Phase-2 loop in place on ``localizer``: labeled known-brand runs plus optional unlabeled runs."""
    labeled = list(labeled)
    _check_inputs(labeled, val, "phase 2 training")
    known = restrict_dataset(labeled, cfg.known_brands)
    stats = brand_statistics(known, cfg.target_brand)
    ws = _labeled_windows(known, cfg, salt=0)
    uws = None
    if unlabeled:
        require_splits(unlabeled, {Split.TRAIN}, "phase 2 training (unlabeled)")
        uws = windows_from_runs([r.unlabeled() for r in unlabeled], cfg.history, labeled=False)
    if val is not None:
        val = restrict_dataset(val, cfg.known_brands)
    report = TrainReport(scenario=3, phase="semi-supervised")
    _, _, p2 = _seed_streams(cfg)
    _train_loop(localizer, ws, cfg.phase2, cfg.weights, stats, cfg, report, p2, _val_windows(val, cfg.history), uws)
    return report


def train_scenario3(
    labeled: Sequence[Run],
    unlabeled: Sequence[Run],
    cfg: ScenarioConfig,
    val: Sequence[Run] | None = None,
    phase1: tuple[Localizer, TrainReport] | None = None,
) -> tuple[Localizer, list[TrainReport]]:
    """Scenario 2 (or a supplied phase-1 result), then semi-supervised refinement.

    Unlabeled runs contribute only label-free terms; their locations, if
    any, are stripped before windowing. The phase-1 model is not modified.
    """
    labeled = list(labeled)
    unlabeled = restrict_dataset(list(unlabeled), cfg.unlabeled_brands) if cfg.unlabeled_brands else list(unlabeled)
    require_splits(labeled, {Split.TRAIN}, "scenario 3 training")
    require_splits(unlabeled, {Split.TRAIN}, "scenario 3 training (unlabeled)")
    if phase1 is None:
        phase1 = train_scenario2(labeled, cfg, val)
    loc1, rep1 = phase1
    if not unlabeled:
        warnings.warn("no unlabeled data: scenario 3 reduces to scenario 2", RuntimeWarning, stacklevel=2)
        return loc1, [rep1]
    loc = _clone(loc1, cfg)
    rep2 = continue_training(loc, labeled, cfg, val, unlabeled)
    return loc, [rep1, rep2]


# -- weight selection ------------------------------------------------------------------------


def default_weight_grid(include_w_u: bool = True) -> list[LossWeights]:
    grid = []
    for w_ps in (0.01, 0.1):
        for w_ssl in (0.001, 0.01):
            for w_ts in (0.001, 0.01):
                for w_u in ((0.1, 1.0) if include_w_u else (1.0,)):
                    grid.append(LossWeights(1.0, w_ps, w_ssl, w_ts, w_u))
    return grid


def select_weights(scores: Sequence[tuple[LossWeights, float]]) -> LossWeights:
    """Lowest score wins; ties go to the smallest (w_ssl, w_ts, w_ps)."""
    if not scores:
        raise ValueError("empty weight grid")
    return min(scores, key=lambda ws: (ws[1], ws[0].w_ssl, ws[0].w_ts, ws[0].w_ps))[0]


def tune_weights(
    grid: Iterable[LossWeights],
    val: Sequence[Run],
    fit: Callable[[LossWeights], Callable[[np.ndarray], np.ndarray]],
    known_brands: Iterable[Brand] | None = None,
    history: int = 5,
) -> tuple[LossWeights, list[tuple[LossWeights, float]]]:
    """Fit one model per grid point and keep the one with the lowest validation mean AE.

    Validation runs must carry the val tag and, when ``known_brands`` is
    given, come from those brands only.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty weight grid")
    val = list(val)
    require_splits(val, {Split.VAL}, "weight tuning")
    if known_brands is not None:
        allowed = {Brand.parse(b) for b in known_brands}
        for r in val:
            if r.brand not in allowed:
                raise DataHygieneError(f"weight tuning: validation run {r.run_id!r} is outside the known brands")
    if len(grid) == 1:
        return grid[0], []
    ws = windows_from_runs(val, history, labeled=True)
    if len(ws) == 0:
        raise ValueError("validation split has no windows")
    scores = []
    for w in grid:
        predict = fit(w)
        err = np.linalg.norm(predict(ws.x) - ws.y, axis=1)
        scores.append((w, float(err.mean())))
        log.info("weights %s -> val mean AE %.4f", w, scores[-1][1])
    return select_weights(scores), scores
