"""Highest-predictive-density machinery and the sampling-based baseline.

The HPD pre-rank of an observation is the predictive mass of points at
least as dense as the observation, estimated by Monte Carlo.  The
baseline recalibrator reshuffles a fresh sample cloud by density rank so
that pre-ranks computed against the recalibrated cloud become uniform.
It emits samples only; it has no density, so its own pre-ranks are
evaluated with the base model's density.

Conventions: the calibration map is fitted on ``1 - HPD`` values (low
density -> value near 0); the calibration-error metric consumes plain
HPD pre-ranks.  Both appear below under those exact names to keep the
orientation unambiguous.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from latentcal._util import SeedLike, as_generator

__all__ = [
    "DegenerateDensityWarning",
    "ConditionalModel",
    "hpd",
    "hpd_from_sample_densities",
    "HdrRecalibrator",
    "fit_hdr_recalibrator",
    "hdr_recalibrate_samples",
]


class DegenerateDensityWarning(RuntimeWarning):
    """All sampled densities were equal; recalibration is a no-op."""


class ConditionalModel(Protocol):
    """Anything with a conditional density and a conditional sampler."""

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray: ...

    def sample(self, x: np.ndarray, count: int, seed: SeedLike) -> np.ndarray: ...


def hpd_from_sample_densities(sample_log_densities: np.ndarray, observed_log_density: float) -> float:
    """Fraction of sampled points at least as dense as the observation."""
    arr = np.asarray(sample_log_densities, dtype=float)
    return float(np.mean(arr >= observed_log_density))


def hpd(
    model: ConditionalModel,
    x: np.ndarray,
    y: np.ndarray,
    sample_count: int = 1000,
    seed: SeedLike = 0,
) -> float:
    """Monte Carlo HPD pre-rank of y under the model's prediction at x.

    Rank-based in the density values, hence invariant under strictly
    increasing transformations of the density.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    rng = as_generator(seed)
    draws = model.sample(x, sample_count, rng)
    sample_dens = np.atleast_1d(model.log_density(x, draws))
    observed = float(np.atleast_1d(model.log_density(x, y))[0])
    return hpd_from_sample_densities(sample_dens, observed)


@dataclass
class HdrRecalibrator:
    """Sampling-based recalibrator targeting uniform HPD pre-ranks.

    ``pre_rank_cdf_values`` holds the sorted ``1 - HPD`` values observed
    on calibration data; ``None`` means the identity map (already
    calibrated), under which recalibration only permutes the cloud.
    """

    model: ConditionalModel
    pre_rank_cdf_values: Optional[np.ndarray]
    sample_budget: int = 1000

    def __post_init__(self) -> None:
        if self.sample_budget < 2:
            raise ValueError("sample_budget must be at least 2")
        if self.pre_rank_cdf_values is not None:
            vals = np.sort(np.asarray(self.pre_rank_cdf_values, dtype=float))
            if np.any((vals < 0.0) | (vals > 1.0)):
                raise ValueError("pre-rank values must lie in [0, 1]")
            self.pre_rank_cdf_values = vals

    def map_quantile(self, u: np.ndarray) -> np.ndarray:
        """Empirical quantile of the fitted 1 - HPD values (identity if unfitted)."""
        u = np.asarray(u, dtype=float)
        if self.pre_rank_cdf_values is None:
            return u
        n = self.pre_rank_cdf_values.size
        ranks = np.clip(np.ceil(u * (n + 1)).astype(int), 1, n)
        return self.pre_rank_cdf_values[ranks - 1]


def fit_hdr_recalibrator(
    model: ConditionalModel,
    x_cal: np.ndarray,
    y_cal: np.ndarray,
    sample_budget: int = 1000,
    seed: SeedLike = 0,
) -> HdrRecalibrator:
    """Estimate 1 - HPD on every calibration pair and freeze their CDF."""
    x_arr = np.atleast_2d(np.asarray(x_cal, dtype=float))
    y_arr = np.atleast_2d(np.asarray(y_cal, dtype=float))
    if x_arr.shape[0] != y_arr.shape[0]:
        raise ValueError("x_cal and y_cal must have matching row counts")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(x_arr.shape[0])
    values = np.array(
        [
            1.0 - hpd(model, x_arr[i], y_arr[i], sample_budget, streams[i])
            for i in range(x_arr.shape[0])
        ]
    )
    return HdrRecalibrator(model, values, sample_budget)


def hdr_recalibrate_samples(
    rec: HdrRecalibrator,
    x: np.ndarray,
    seed: SeedLike = 0,
) -> np.ndarray:
    """Emit a density-rank-reindexed sample cloud at covariate x.

    Draws the sample budget from the base model, sorts by base density,
    and re-reads the sorted cloud at the positions the fitted pre-rank
    CDF prescribes.  Duplicates are expected; the output is always a
    sub-multiset of the drawn cloud.
    """
    rng = as_generator(seed)
    budget = rec.sample_budget
    draws = np.atleast_2d(rec.model.sample(x, budget, rng))
    dens = np.atleast_1d(rec.model.log_density(x, draws))
    if np.all(dens == dens[0]):
        warnings.warn(
            "all sampled densities are equal; returning base samples unchanged",
            DegenerateDensityWarning,
        )
        return draws
    order = np.argsort(dens, kind="stable")
    sorted_draws = draws[order]
    targets = rec.map_quantile((np.arange(budget) + 0.5) / budget)
    positions = np.clip(np.rint(targets * budget - 0.5).astype(int), 0, budget - 1)
    return sorted_draws[positions]
