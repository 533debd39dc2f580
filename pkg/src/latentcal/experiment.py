"""Experiment orchestration: data splits, method comparison, reports.

One experiment compares, per seed, the base flow against its radially
recalibrated version and the sample-reshuffling baseline, on a fresh
split of the data:

* split into train / validation / test (default 65/20/15), or
  train / validation / calibration / test when a dedicated calibration
  fraction is configured;
* standardize covariates and responses with training-split statistics;
* fit the calibration map on the calibration split (the validation split
  by default, which reuses data but gives up finite-sample guarantees);
* score every method on the test split.

Runs are deterministic: every stochastic stage draws from a seed stream
derived from the per-seed root, and reports serialize with sorted keys,
so identical configs produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from latentcal.calibration import UnsupportedMapOperation
from latentcal.flows import (
    ConditionalFlow,
    LatentDistribution,
    StandardizedFlow,
    SubprocessFlow,
    TabulatedFlow,
    get_task,
)
from latentcal.hdr import HdrRecalibrator, fit_hdr_recalibrator, hdr_recalibrate_samples, hpd
from latentcal.metrics import (
    energy_score,
    hdr_ece,
    l_ece,
    nll_mean,
    relative_score,
    reliability_curve,
)
from latentcal.recalibrate import RadialRecalibrator, fit_radial_recalibrator

REPORT_FORMAT = "latentcal/experiment-report"
REPORT_VERSION = 1

METHOD_BASE = "base"
METHOD_RADIAL = "radial"
METHOD_HDR = "hdr_resample"
ALL_METHODS = (METHOD_BASE, METHOD_RADIAL, METHOD_HDR)
ALL_METRICS = ("nll", "l_ece", "hdr_ece", "energy_score")

__all__ = [
    "Dataset",
    "ExperimentConfig",
    "ingest_csv",
    "split_indices",
    "run_experiment",
    "run_single_seed",
    "write_report",
]


# ---------------------------------------------------------------------------
# Data ingestion
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """Covariate/response matrices plus optional normalization constants."""

    covariates: np.ndarray
    responses: np.ndarray
    covariate_names: list[str]
    response_names: list[str]
    x_mean: Optional[np.ndarray] = None
    x_std: Optional[np.ndarray] = None
    y_mean: Optional[np.ndarray] = None
    y_std: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.covariates.shape[0]


def ingest_csv(path: str, covariate_cols: Sequence[str], response_cols: Sequence[str]) -> Dataset:
    """Load a dataset from a headered, comma-separated UTF-8 file.

    Every requested column must exist and parse as a finite number; a bad
    cell aborts with the offending data row number (1-based, excluding
    the header).
    """
    covariate_cols = list(covariate_cols)
    response_cols = list(response_cols)
    if not covariate_cols or not response_cols:
        raise ValueError("need at least one covariate and one response column")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file, expected a header row")
        missing = [c for c in covariate_cols + response_cols if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        x_rows, y_rows = [], []
        for row_number, row in enumerate(reader, start=1):
            values = {}
            for col in covariate_cols + response_cols:
                cell = row[col]
                try:
                    parsed = float(cell)
                except (TypeError, ValueError):
                    raise ValueError(
                        f"{path}: row {row_number}, column {col!r}: "
                        f"not numeric: {cell!r}"
                    ) from None
                if not math.isfinite(parsed):
                    raise ValueError(
                        f"{path}: row {row_number}, column {col!r}: non-finite value"
                    )
                values[col] = parsed
            x_rows.append([values[c] for c in covariate_cols])
            y_rows.append([values[c] for c in response_cols])
    if not x_rows:
        raise ValueError(f"{path}: no data rows")
    return Dataset(
        covariates=np.asarray(x_rows, dtype=float),
        responses=np.asarray(y_rows, dtype=float),
        covariate_names=covariate_cols,
        response_names=response_cols,
    )


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    Exactly one of ``task`` (synthetic task name) or ``data_csv`` must be
    set.  ``split_fractions`` has three entries (train/val/test, the
    calibration map is fitted on the validation split) or four
    (train/val/cal/test, a dedicated calibration split reserving the
    finite-sample guarantees).
    """

    task: Optional[str] = None
    data_csv: Optional[str] = None
    covariate_cols: Optional[list[str]] = None
    response_cols: Optional[list[str]] = None
    flow: Optional[dict] = None
    sample_count: int = 2000
    split_fractions: tuple = (0.65, 0.20, 0.15)
    seeds: list[int] = field(default_factory=lambda: [0])
    map_kind: str = "gamma_kde"
    map_options: dict = field(default_factory=dict)
    hdr_sample_budget: int = 1000
    energy_sample_count: int = 100
    methods: list[str] = field(default_factory=lambda: list(ALL_METHODS))
    metrics: list[str] = field(default_factory=lambda: list(ALL_METRICS))
    normalize: bool = True
    reliability_grid_size: int = 101
    reliability_band_draws: int = 1000
    output_dir: str = "results"

    def __post_init__(self) -> None:
        if (self.task is None) == (self.data_csv is None):
            raise ValueError("exactly one of task / data_csv must be set")
        fracs = tuple(float(f) for f in self.split_fractions)
        if len(fracs) not in (3, 4):
            raise ValueError("split_fractions needs 3 (train/val/test) or 4 (train/val/cal/test) entries")
        if any(f <= 0.0 for f in fracs):
            raise ValueError("split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        self.split_fractions = fracs
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.data_csv is not None and not (self.covariate_cols and self.response_cols):
            raise ValueError("CSV data sources need covariate_cols and response_cols")
        unknown_methods = set(self.methods) - set(ALL_METHODS)
        if unknown_methods:
            raise ValueError(f"unknown methods: {sorted(unknown_methods)}")
        unknown_metrics = set(self.metrics) - set(ALL_METRICS)
        if unknown_metrics:
            raise ValueError(f"unknown metrics: {sorted(unknown_metrics)}")

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["split_fractions"] = list(self.split_fractions)
        return payload


def split_indices(n: int, fractions: Sequence[float], seed: int) -> dict[str, np.ndarray]:
    """Deterministic disjoint split of range(n) by fractions.

    Returns train/val/test index arrays, plus cal when four fractions are
    given; with three fractions cal aliases val.
    """
    fracs = list(fractions)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([round(f * n) for f in fracs[:-1]]).astype(int)
    parts = np.split(perm, bounds)
    if len(fracs) == 3:
        out = {"train": parts[0], "val": parts[1], "test": parts[2], "cal": parts[1]}
    else:
        out = {"train": parts[0], "val": parts[1], "cal": parts[2], "test": parts[3]}
    for name, idx in out.items():
        if idx.size == 0:
            raise ValueError(f"split produced an empty {name} set (n={n})")
    return out


# ---------------------------------------------------------------------------
# Per-seed pipeline
# ---------------------------------------------------------------------------


def _build_flow(config: ExperimentConfig, d: int) -> ConditionalFlow:
    spec = config.flow or {}
    kind = spec.get("kind")
    if config.task is not None:
        return get_task(config.task).flow
    latent_spec = spec.get("latent", {"kind": "gaussian", "d": d})
    latent = LatentDistribution(latent_spec["kind"], int(latent_spec["d"]))
    if kind == "tabulated":
        return TabulatedFlow.from_csv(
            spec["path"], len(config.covariate_cols), latent.d, latent
        )
    if kind == "subprocess":
        return SubprocessFlow(spec["argv"], len(config.covariate_cols), latent)
    raise ValueError("CSV data sources need a flow spec of kind tabulated/subprocess")


def _make_dataset(config: ExperimentConfig, seed: int) -> Dataset:
    if config.task is not None:
        task = get_task(config.task)
        stream = np.random.SeedSequence([seed, 0])
        x, y = task.sample_dataset(np.random.default_rng(stream), config.sample_count)
        names_x = [f"x{i}" for i in range(x.shape[1])]
        names_y = [f"y{i}" for i in range(y.shape[1])]
        return Dataset(x, y, names_x, names_y)
    return ingest_csv(config.data_csv, config.covariate_cols, config.response_cols)


def fit_map_for_experiment(
    flow: ConditionalFlow,
    x_cal: np.ndarray,
    y_cal: np.ndarray,
    config: ExperimentConfig,
) -> RadialRecalibrator:
    """Calibration-map fitting stage; reads only the calibration split."""
    return fit_radial_recalibrator(
        flow,
        x_cal,
        y_cal,
        map_kind=config.map_kind,
        flow_id=config.task,
        **config.map_options,
    )


def _standardize(dataset: Dataset, train_idx: np.ndarray) -> tuple[Dataset, dict]:
    x_mean = dataset.covariates[train_idx].mean(axis=0)
    x_std = dataset.covariates[train_idx].std(axis=0)
    y_mean = dataset.responses[train_idx].mean(axis=0)
    y_std = dataset.responses[train_idx].std(axis=0)
    x_std = np.where(x_std > 0.0, x_std, 1.0)  # constant columns pass through
    y_std = np.where(y_std > 0.0, y_std, 1.0)
    standardized = Dataset(
        covariates=(dataset.covariates - x_mean) / x_std,
        responses=(dataset.responses - y_mean) / y_std,
        covariate_names=dataset.covariate_names,
        response_names=dataset.response_names,
        x_mean=x_mean,
        x_std=x_std,
        y_mean=y_mean,
        y_std=y_std,
    )
    stats = {"x_mean": x_mean, "x_std": x_std, "y_mean": y_mean, "y_std": y_std}
    return standardized, stats


def _hdr_pre_ranks(
    model,
    x_test: np.ndarray,
    y_test: np.ndarray,
    budget: int,
    root: np.random.SeedSequence,
) -> np.ndarray:
    streams = root.spawn(x_test.shape[0])
    return np.array(
        [
            hpd(model, x_test[i], y_test[i], budget, streams[i])
            for i in range(x_test.shape[0])
        ]
    )


def _hdr_resample_pre_ranks(
    rec_hdr: HdrRecalibrator,
    flow: ConditionalFlow,
    x_test: np.ndarray,
    y_test: np.ndarray,
    root: np.random.SeedSequence,
) -> np.ndarray:
    # density-free method: clouds come from the resampler, ranking uses
    # the base model's density
    streams = root.spawn(x_test.shape[0])
    out = np.empty(x_test.shape[0])
    for i, stream in enumerate(streams):
        cloud = hdr_recalibrate_samples(rec_hdr, x_test[i], stream)
        cloud_dens = np.atleast_1d(flow.log_density(x_test[i], cloud))
        obs_dens = float(np.atleast_1d(flow.log_density(x_test[i], y_test[i]))[0])
        out[i] = np.mean(cloud_dens >= obs_dens)
    return out


def run_single_seed(config: ExperimentConfig, seed: int) -> dict:
    """Run the full protocol for one seed; returns scores and PIT arrays."""
    dataset = _make_dataset(config, seed)
    flow = _build_flow(config, dataset.responses.shape[1])
    idx = split_indices(dataset.n, config.split_fractions, seed)

    if config.normalize:
        dataset, _ = _standardize(dataset, idx["train"])
        flow = StandardizedFlow(
            flow, dataset.x_mean, dataset.x_std, dataset.y_mean, dataset.y_std
        )

    x_cal, y_cal = dataset.covariates[idx["cal"]], dataset.responses[idx["cal"]]
    x_test, y_test = dataset.covariates[idx["test"]], dataset.responses[idx["test"]]

    rec = fit_map_for_experiment(flow, x_cal, y_cal, config)

    result: dict = {"scores": {m: {} for m in config.methods}, "pits": {}, "pre_ranks": {}}
    norms_test = np.atleast_1d(flow.latent_norm(x_test, y_test))

    if METHOD_BASE in config.methods:
        result["pits"][METHOD_BASE] = np.atleast_1d(rec.norm_law.cdf(norms_test))
    if METHOD_RADIAL in config.methods:
        result["pits"][METHOD_RADIAL] = np.atleast_1d(rec.cal_map.cdf(norms_test))

    if "l_ece" in config.metrics:
        for method in (METHOD_BASE, METHOD_RADIAL):
            if method in config.methods:
                result["scores"][method]["l_ece"] = l_ece(result["pits"][method])

    if "nll" in config.metrics:
        if METHOD_BASE in config.methods:
            result["scores"][METHOD_BASE]["nll"] = nll_mean(flow.log_density(x_test, y_test))
        if METHOD_RADIAL in config.methods:
            try:
                result["scores"][METHOD_RADIAL]["nll"] = nll_mean(rec.log_density(x_test, y_test))
            except UnsupportedMapOperation:
                result["scores"][METHOD_RADIAL]["nll"] = None

    rec_hdr = None
    if METHOD_HDR in config.methods:
        hdr_fit_root = np.random.SeedSequence([seed, 1])
        rec_hdr = fit_hdr_recalibrator(
            flow, x_cal, y_cal, config.hdr_sample_budget, hdr_fit_root
        )

    if "hdr_ece" in config.metrics:
        if METHOD_BASE in config.methods:
            ranks = _hdr_pre_ranks(
                flow, x_test, y_test, config.hdr_sample_budget, np.random.SeedSequence([seed, 2])
            )
            result["pre_ranks"][METHOD_BASE] = ranks
            result["scores"][METHOD_BASE]["hdr_ece"] = hdr_ece(ranks)
        if METHOD_RADIAL in config.methods and rec.smooth:
            ranks = _hdr_pre_ranks(
                rec, x_test, y_test, config.hdr_sample_budget, np.random.SeedSequence([seed, 3])
            )
            result["pre_ranks"][METHOD_RADIAL] = ranks
            result["scores"][METHOD_RADIAL]["hdr_ece"] = hdr_ece(ranks)
        if METHOD_HDR in config.methods:
            ranks = _hdr_resample_pre_ranks(
                rec_hdr, flow, x_test, y_test, np.random.SeedSequence([seed, 4])
            )
            result["pre_ranks"][METHOD_HDR] = ranks
            result["scores"][METHOD_HDR]["hdr_ece"] = hdr_ece(ranks)

    if "energy_score" in config.metrics:
        k = config.energy_sample_count
        if METHOD_BASE in config.methods:
            result["scores"][METHOD_BASE]["energy_score"] = energy_score(
                y_test,
                lambda i, count, rng: flow.sample(x_test[i], count, rng),
                k,
                np.random.SeedSequence([seed, 5]),
            )
        if METHOD_RADIAL in config.methods:
            result["scores"][METHOD_RADIAL]["energy_score"] = energy_score(
                y_test,
                lambda i, count, rng: rec.sample(x_test[i], count, rng),
                k,
                np.random.SeedSequence([seed, 6]),
            )
        if METHOD_HDR in config.methods:
            resampler = HdrRecalibrator(flow, rec_hdr.pre_rank_cdf_values, sample_budget=k)
            result["scores"][METHOD_HDR]["energy_score"] = energy_score(
                y_test,
                lambda i, count, rng: hdr_recalibrate_samples(resampler, x_test[i], rng),
                k,
                np.random.SeedSequence([seed, 7]),
            )

    # relative scores against the base method
    base_scores = result["scores"].get(METHOD_BASE, {})
    for metric, rel_name in (("nll", "relative_nll"), ("energy_score", "relative_energy_score")):
        base_value = base_scores.get(metric)
        if base_value in (None, 0.0):
            continue
        for method in config.methods:
            value = result["scores"][method].get(metric)
            result["scores"][method][rel_name] = (
                None if value is None else relative_score(value, base_value)
            )
    return result


# ---------------------------------------------------------------------------
# Aggregation and reporting
# ---------------------------------------------------------------------------


def _aggregate(per_seed: list[dict], methods: Sequence[str]) -> dict:
    metrics_out: dict = {}
    for method in methods:
        names = sorted({k for r in per_seed for k in r["scores"].get(method, {})})
        metrics_out[method] = {}
        for name in names:
            values = [r["scores"][method].get(name) for r in per_seed]
            numeric = [v for v in values if v is not None]
            if not numeric:
                metrics_out[method][name] = {"mean": None, "stderr": None, "per_seed": values}
                continue
            mean = float(np.mean(numeric))
            stderr = (
                float(np.std(numeric, ddof=1) / math.sqrt(len(numeric)))
                if len(numeric) > 1
                else 0.0
            )
            metrics_out[method][name] = {"mean": mean, "stderr": stderr, "per_seed": values}
    return metrics_out


def _curve_rows(per_seed: list[dict], key: str, config: ExperimentConfig) -> list[dict]:
    grid = np.linspace(0.0, 1.0, config.reliability_grid_size)
    rows = []
    methods = sorted({m for r in per_seed for m in r[key]})
    for method in methods:
        pooled = np.concatenate([r[key][method] for r in per_seed])
        curve = reliability_curve(
            pooled, grid=grid, mc_draws=config.reliability_band_draws, seed=0
        )
        for point in curve.to_rows():
            rows.append({"method": method, **point})
    return rows


def _write_curve_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["method", "alpha", "empirical", "band_lo", "band_hi"])
        for row in rows:
            writer.writerow(
                [
                    row["method"],
                    repr(row["alpha"]),
                    repr(row["empirical"]),
                    repr(row["band_lo"]),
                    repr(row["band_hi"]),
                ]
            )


def write_report(report: dict, curves: dict[str, list[dict]], output_dir: str) -> str:
    os.makedirs(output_dir, exist_ok=True)
    report_path = os.path.join(output_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, sort_keys=True, indent=2)
        handle.write("\n")
    for kind, rows in curves.items():
        _write_curve_csv(os.path.join(output_dir, f"reliability_{kind}.csv"), rows)
    return report_path


def run_experiment(config: ExperimentConfig, output_dir: Optional[str] = None) -> dict:
    """Run all seeds, aggregate, and write report.json plus curve CSVs.

    A failing seed is recorded with its reason and skipped in the
    aggregation; the report then carries a partial-results marker.
    """
    per_seed: list[dict] = []
    completed: list[int] = []
    failed: dict[str, str] = {}
    for seed in config.seeds:
        try:
            per_seed.append(run_single_seed(config, seed))
            completed.append(seed)
        except Exception as exc:  # noqa: BLE001 - seed isolation is the point
            failed[str(seed)] = f"{type(exc).__name__}: {exc}"
    report = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "config": config.to_dict(),
        "seeds_completed": completed,
        "seeds_failed": failed,
        "partial": bool(failed),
        "metrics": _aggregate(per_seed, config.methods),
    }
    curves = {}
    if per_seed:
        curves["latent"] = _curve_rows(per_seed, "pits", config)
        curves["hdr"] = _curve_rows(per_seed, "pre_ranks", config)
    write_report(report, curves, output_dir or config.output_dir)
    return report
