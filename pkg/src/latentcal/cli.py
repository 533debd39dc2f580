"""Command-line interface: fit, evaluate, recalibrate, report.

Every command takes a JSON experiment config (see ExperimentConfig for
the schema).  ``fit`` persists a recalibrator for one seed's split;
``evaluate`` runs the full multi-seed comparison and writes report.json
plus reliability CSVs; ``recalibrate`` applies a persisted recalibrator
to new data (scores) or draws samples from it; ``report`` pretty-prints
a report.json.  Exit code 0 means full success.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from latentcal.experiment import (
    ExperimentConfig,
    _build_flow,
    _make_dataset,
    _standardize,
    fit_map_for_experiment,
    ingest_csv,
    run_experiment,
    split_indices,
)
from latentcal.flows import StandardizedFlow
from latentcal.recalibrate import load_radial_recalibrator, save_radial_recalibrator


def _prepare_seed(config: ExperimentConfig, seed: int):
    """Dataset, flow, and split for one seed, standardized when configured."""
    dataset = _make_dataset(config, seed)
    flow = _build_flow(config, dataset.responses.shape[1])
    idx = split_indices(dataset.n, config.split_fractions, seed)
    if config.normalize:
        dataset, _ = _standardize(dataset, idx["train"])
        flow = StandardizedFlow(
            flow, dataset.x_mean, dataset.x_std, dataset.y_mean, dataset.y_std
        )
    return dataset, flow, idx


def _cmd_fit(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    seed = args.seed if args.seed is not None else config.seeds[0]
    out_dir = args.out or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    dataset, flow, idx = _prepare_seed(config, seed)
    rec = fit_map_for_experiment(
        flow, dataset.covariates[idx["cal"]], dataset.responses[idx["cal"]], config
    )
    rec_path = os.path.join(out_dir, "recalibrator.json")
    save_radial_recalibrator(rec, rec_path)
    meta = {"seed": seed, "config": os.path.abspath(args.config), "map_kind": config.map_kind}
    with open(os.path.join(out_dir, "fit_meta.json"), "w", encoding="utf-8") as handle:
        json.dump(meta, handle, sort_keys=True, indent=2)
        handle.write("\n")
    print(f"fitted {config.map_kind} map on {idx['cal'].size} calibration norms -> {rec_path}")
    return 0


def _cmd_evaluate(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seeds:
        config.seeds = [int(s) for s in args.seeds.split(",")]
    out_dir = args.out or config.output_dir
    report = run_experiment(config, out_dir)
    n_done = len(report["seeds_completed"])
    n_total = n_done + len(report["seeds_failed"])
    print(f"completed {n_done}/{n_total} seeds -> {os.path.join(out_dir, 'report.json')}")
    if report["partial"]:
        for seed, reason in report["seeds_failed"].items():
            print(f"  seed {seed} failed: {reason}", file=sys.stderr)
        return 1
    return 0


def _cmd_recalibrate(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        seed = args.seed
    else:
        meta_path = os.path.join(os.path.dirname(args.recalibrator), "fit_meta.json")
        if os.path.exists(meta_path):
            with open(meta_path, encoding="utf-8") as handle:
                seed = json.load(handle)["seed"]
        else:
            seed = config.seeds[0]
    dataset, flow, _ = _prepare_seed(config, seed)
    rec = load_radial_recalibrator(args.recalibrator, flow)

    if args.sample_at is not None:
        x = np.array([float(v) for v in args.sample_at.split(",")])
        if config.normalize:
            x = (x - dataset.x_mean) / dataset.x_std
        draws = rec.sample(x, args.count, seed=args.sample_seed)
        if config.normalize:
            draws = draws * dataset.y_std + dataset.y_mean
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(",".join(dataset.response_names) + "\n")
            for row in draws:
                handle.write(",".join(repr(float(v)) for v in row) + "\n")
        print(f"wrote {args.count} recalibrated samples -> {args.out}")
        return 0

    if args.data is None:
        print("recalibrate needs either --data or --sample-at", file=sys.stderr)
        return 2
    new_data = ingest_csv(args.data, dataset.covariate_names, dataset.response_names)
    x_new, y_new = new_data.covariates, new_data.responses
    if config.normalize:
        x_new = (x_new - dataset.x_mean) / dataset.x_std
        y_new = (y_new - dataset.y_mean) / dataset.y_std
    pits = np.atleast_1d(rec.latent_pit(x_new, y_new))
    columns = ["latent_pit"]
    values = [pits]
    if rec.smooth:
        log_dens = np.atleast_1d(rec.log_density(x_new, y_new))
        if config.normalize:
            log_dens = log_dens - np.sum(np.log(dataset.y_std))
        columns.append("log_density")
        values.append(log_dens)
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(",".join(columns) + "\n")
        for row in zip(*values):
            handle.write(",".join(repr(float(v)) for v in row) + "\n")
    print(f"scored {x_new.shape[0]} rows -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    with open(args.report, encoding="utf-8") as handle:
        report = json.load(handle)
    print(f"seeds completed: {report['seeds_completed']}")
    if report.get("seeds_failed"):
        print(f"seeds failed: {report['seeds_failed']}")
    metrics = report.get("metrics", {})
    names = sorted({name for per_method in metrics.values() for name in per_method})
    header = ["method"] + names
    widths = [max(len(h), 22) for h in header]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for method in sorted(metrics):
        cells = [method]
        for name in names:
            entry = metrics[method].get(name)
            if entry is None or entry["mean"] is None:
                cells.append("-")
            else:
                cells.append(f"{entry['mean']:.5g} +- {entry['stderr']:.2g}")
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentcal",
        description="Latent-space recalibration of conditional flows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit and persist a recalibrator for one seed")
    p_fit.add_argument("--config", required=True, help="experiment config JSON")
    p_fit.add_argument("--seed", type=int, default=None, help="override the split seed")
    p_fit.add_argument("--out", default=None, help="output directory")
    p_fit.set_defaults(func=_cmd_fit)

    p_eval = sub.add_parser("evaluate", help="run the full multi-seed comparison")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--seeds", default=None, help="comma-separated seed override")
    p_eval.add_argument("--out", default=None, help="output directory")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_rec = sub.add_parser("recalibrate", help="apply a persisted recalibrator")
    p_rec.add_argument("--config", required=True)
    p_rec.add_argument("--recalibrator", required=True, help="recalibrator JSON path")
    p_rec.add_argument("--seed", type=int, default=None, help="split seed used at fit time")
    p_rec.add_argument("--data", default=None, help="CSV of rows to score")
    p_rec.add_argument("--sample-at", default=None, help="comma-separated covariate vector")
    p_rec.add_argument("--count", type=int, default=100, help="samples to draw")
    p_rec.add_argument("--sample-seed", type=int, default=0)
    p_rec.add_argument("--out", required=True, help="output CSV path")
    p_rec.set_defaults(func=_cmd_recalibrate)

    p_rep = sub.add_parser("report", help="pretty-print a report.json")
    p_rep.add_argument("--report", required=True, help="path to report.json")
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
