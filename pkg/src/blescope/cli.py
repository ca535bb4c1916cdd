"""Command line entry point: ``blescope simulate|stats|train|evaluate|baseline``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

from .baseline import DEFAULT_K, FingerprintDb, KnnLocalizer
from .core import Brand, DataHygieneError, IngestError, Split, load_manifest, restrict_dataset, write_manifest, write_run
from .eval import evaluate, export_cdf
from .model import Localizer
from .simulate import SimConfig, simulate_dataset
from .stats import compute_stat_matrix, format_receiver_table, receiver_stats_by_phone
from .train import (
    ScenarioConfig,
    TrainingAborted,
    default_weight_grid,
    train_scenario1,
    train_scenario2,
    train_scenario3,
    tune_weights,
)

log = logging.getLogger("blescope")


def _load_config(path: str | None) -> dict:
    if path is None:
        return json.loads(resources.files("blescope.data").joinpath("benchmark.json").read_text())
    return json.loads(Path(path).read_text())


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    d = _load_config(args.config)
    cfg = SimConfig.from_dict(d.get("simulation", d))
    runs = simulate_dataset(cfg, args.seed)
    out = _out_dir(args.out)
    (out / "runs").mkdir(exist_ok=True)
    entries = []
    for run in runs:
        rel = f"runs/{run.run_id}.csv"
        write_run(run, out / rel)
        entry = {"path": rel, "split": run.split.value}
        if not run.labeled:
            entry["unlabeled"] = True
        entries.append(entry)
    write_manifest(out / "manifest.json", entries, cfg.environment.n_beacons)
    print(f"wrote {len(runs)} runs to {out / 'manifest.json'}")
    return 0


def cmd_stats(args) -> int:
    runs = load_manifest(args.data, splits=[Split.TRAIN])
    labeled = [r for r in runs if r.labeled]
    print(format_receiver_table(receiver_stats_by_phone(labeled)))
    if args.brand:
        brand = Brand.parse(args.brand)
        own = [r for r in labeled if r.brand is brand]
        if not own:
            raise ValueError(f"no training runs for brand {brand.value}")
        sm = compute_stat_matrix(own, brand)
        if args.out:
            sm.save(args.out)
            print(f"statistics matrix for {brand.value} written to {args.out}")
    return 0


def _scenario_config(args) -> ScenarioConfig:
    d = _load_config(args.config)
    tr = dict(d.get("training", {}))
    tr["seed"] = args.seed
    tr["scenario"] = args.scenario
    return ScenarioConfig.from_dict(tr)


def cmd_train(args) -> int:
    cfg = _scenario_config(args)
    runs = load_manifest(args.data, splits=[Split.TRAIN, Split.VAL])
    train = [r for r in runs if r.split is Split.TRAIN and r.labeled]
    unlabeled = [r for r in runs if r.split is Split.TRAIN and not r.labeled]
    val = [r for r in runs if r.split is Split.VAL] or None
    out = _out_dir(args.out)

    def fit(c: ScenarioConfig):
        if c.scenario == 1:
            loc, rep = train_scenario1(train, c, val)
            return loc, [rep]
        if c.scenario == 2:
            loc, rep = train_scenario2(train, c, val)
            return loc, [rep]
        return train_scenario3(train, unlabeled, c, val)

    try:
        if args.tune and cfg.scenario != 1:
            known_val = restrict_dataset(val or [], cfg.known_brands)
            if not known_val:
                raise ValueError("weight tuning needs a known-brand validation split")
            grid = default_weight_grid(include_w_u=cfg.scenario == 3)
            best, scores = tune_weights(
                grid, known_val, lambda w: fit(replace(cfg, weights=w))[0].predict, cfg.known_brands, cfg.history
            )
            (out / "tuning.json").write_text(json.dumps([{**asdict(w), "val_mean_ae": v} for w, v in scores], indent=2))
            cfg = replace(cfg, weights=best)
        loc, reports = fit(cfg)
    except TrainingAborted as exc:
        exc.localizer.save(out / "last_finite.npz")
        (out / "train_report.json").write_text(exc.report.to_json())
        print(f"training aborted: {exc}; last finite state saved", file=sys.stderr)
        return 3
    loc.save(out / "model.npz")
    (out / "train_report.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    print(f"checkpoint {reports[-1].checkpoint_id[:16]} saved to {out / 'model.npz'}")
    return 0


def _finish_report(report, out: Path) -> None:
    (out / "eval_report.json").write_text(report.to_json())
    (out / "eval_report.txt").write_text(report.format_table() + "\n")
    export_cdf(report, out / "cdf.csv")
    print(report.format_table())


def cmd_evaluate(args) -> int:
    loc = Localizer.load(args.model)
    test = load_manifest(args.data, splits=[Split.TEST])
    report = evaluate(loc.predict, test, method=args.method, scenario=args.scenario_tag)
    _finish_report(report, _out_dir(args.out))
    return 0


def cmd_baseline(args) -> int:
    train = [r for r in load_manifest(args.data, splits=[Split.TRAIN]) if r.labeled]
    if args.brands:
        wanted = {Brand.parse(b) for b in args.brands.split(",")}
        train = [r for r in train if r.brand in wanted]
    db = FingerprintDb.from_runs(train)
    test = load_manifest(args.data, splits=[Split.TEST])
    report = evaluate(KnnLocalizer(db, args.k), test, method=f"knn-{args.k}", scenario=args.scenario_tag)
    _finish_report(report, _out_dir(args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blescope", description="BLE RSSI localization toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--config", help="JSON config (default: packaged benchmark)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output folder")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("stats", help="receiver statistics and a brand statistics matrix")
    s.add_argument("--data", required=True, help="dataset manifest")
    s.add_argument("--brand", help="brand for the statistics matrix")
    s.add_argument("--out", help="matrix output (.json or .csv)")
    s.add_argument("--config", help="unused; accepted for symmetry")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("train", help="train a localizer")
    s.add_argument("--data", required=True, help="dataset manifest")
    s.add_argument("--config", help="JSON config with a 'training' section")
    s.add_argument("--scenario", type=int, choices=(1, 2, 3), default=2)
    s.add_argument("--tune", action="store_true", help="grid-search loss weights on the validation split")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output folder")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    s.add_argument("--model", required=True, help="checkpoint (.npz)")
    s.add_argument("--data", required=True, help="dataset manifest")
    s.add_argument("--method", default="localizer")
    s.add_argument("--scenario-tag", default="")
    s.add_argument("--config", help="unused; accepted for symmetry")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output folder")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("baseline", help="weighted KNN fingerprinting baseline")
    s.add_argument("method", nargs="?", default="knn", choices=("knn",))
    s.add_argument("--data", required=True, help="dataset manifest")
    s.add_argument("--k", type=int, default=DEFAULT_K)
    s.add_argument("--brands", help="comma-separated brands for the database")
    s.add_argument("--scenario-tag", default="")
    s.add_argument("--config", help="unused; accepted for symmetry")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output folder")
    s.set_defaults(func=cmd_baseline)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (DataHygieneError, IngestError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
