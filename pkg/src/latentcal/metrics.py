"""Evaluation metrics for calibration and predictive accuracy.

The two calibration errors share one estimator: the L1 distance between
the order statistics of probability-style values and the uniform grid
j / (N + 1).  Its maximum over inputs is N / (2 (N + 1)), approaching
0.5 from below.  The energy score is the sample-based strictly proper
scoring rule over two independent sample sets per test point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from latentcal._util import SeedLike, as_generator

ArrayLike = Union[float, np.ndarray]

REPORT_FORMAT = "latentcal/metrics-report"
REPORT_VERSION = 1

__all__ = [
    "l_ece",
    "hdr_ece",
    "energy_score",
    "nll_mean",
    "relative_score",
    "bpd",
    "ReliabilityCurve",
    "reliability_curve",
    "MetricsReport",
]


def _check_unit_interval(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def l_ece(pits: Sequence[float]) -> float:
    """Latent calibration error of PIT values.

    Sum of |U_(j) - j/(N+1)| over the order statistics, normalized by
    N + 1.  Zero for perfectly uniform ranks; at most N / (2 (N + 1)).
    """
    arr = np.sort(_check_unit_interval(pits, "pits"))
    n = arr.size
    grid = np.arange(1, n + 1) / (n + 1.0)
    return float(np.sum(np.abs(arr - grid)) / (n + 1.0))


def hdr_ece(pre_ranks: Sequence[float]) -> float:
    """Calibration error of density pre-ranks; same estimator as l_ece."""
    arr = np.sort(_check_unit_interval(pre_ranks, "pre_ranks"))
    n = arr.size
    grid = np.arange(1, n + 1) / (n + 1.0)
    return float(np.sum(np.abs(arr - grid)) / (n + 1.0))


def energy_score(
    truths: np.ndarray,
    sampler: Callable[[int, int, np.random.Generator], np.ndarray],
    sample_count: int = 100,
    seed: SeedLike = 0,
) -> float:
    """Energy score over a test set, two independent sample sets per point.

    ``sampler(i, count, rng)`` must return ``count`` draws from the
    predictive distribution at test point ``i``.  Per point the score is
    mean |s - y| over the first set minus half the mean cross distance
    between the two sets; the result averages over points.
    """
    truths = np.atleast_2d(np.asarray(truths, dtype=float))
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    if isinstance(seed, np.random.SeedSequence):
        root = seed
    elif seed is None or isinstance(seed, (int, np.integer)):
        root = np.random.SeedSequence(seed)
    else:
        raise TypeError("seed must be an int, SeedSequence, or None")
    streams = root.spawn(truths.shape[0])
    total = 0.0
    for i, y in enumerate(truths):
        first_seq, second_seq = streams[i].spawn(2)
        first = np.atleast_2d(sampler(i, sample_count, np.random.default_rng(first_seq)))
        second = np.atleast_2d(sampler(i, sample_count, np.random.default_rng(second_seq)))
        if first.shape != (sample_count, truths.shape[1]) or second.shape != first.shape:
            raise ValueError("sampler returned draws of unexpected shape")
        term_match = np.mean(np.linalg.norm(first - y[None, :], axis=1))
        cross = np.linalg.norm(first[:, None, :] - second[None, :, :], axis=2)
        term_spread = np.sum(cross) / (2.0 * sample_count**2)
        total += term_match - term_spread
    return total / truths.shape[0]


def nll_mean(log_densities: Sequence[float]) -> float:
    """Average negative log density."""
    arr = np.asarray(log_densities, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError("log_densities must be nonempty")
    return float(-np.mean(arr))


def relative_score(score: float, score_base: float) -> float:
    """Difference to the base score, normalized by its absolute value."""
    if score_base == 0.0:
        raise ZeroDivisionError("relative score undefined for a zero base score")
    return (score - score_base) / abs(score_base)


def bpd(nll: float, d: int) -> float:
    """Bits per dimension: (nll / d + ln 128) / ln 2."""
    if d < 1:
        raise ValueError("dimension must be positive")
    return (nll / d + math.log(128.0)) / math.log(2.0)


@dataclass(frozen=True)
class ReliabilityCurve:
    """Empirical CDF of PIT values on a grid, with consistency bands."""

    grid: np.ndarray
    empirical: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    band_level: float

    def to_rows(self) -> list[dict]:
        return [
            {
                "alpha": float(a),
                "empirical": float(e),
                "band_lo": float(lo),
                "band_hi": float(hi),
            }
            for a, e, lo, hi in zip(self.grid, self.empirical, self.band_lo, self.band_hi)
        ]


def reliability_curve(
    pits: Sequence[float],
    grid: Optional[np.ndarray] = None,
    band_level: float = 0.9,
    mc_draws: int = 1000,
    seed: SeedLike = 0,
) -> ReliabilityCurve:
    """Reliability-diagram data: nominal levels against empirical CDF values.

    Bands are pointwise Monte Carlo quantiles of empirical CDFs computed
    from ``mc_draws`` synthetic uniform samples of the same size, at the
    symmetric quantiles of ``band_level``.
    """
    arr = np.sort(_check_unit_interval(pits, "pits"))
    if grid is None:
        grid = np.linspace(0.0, 1.0, 101)
    grid = _check_unit_interval(grid, "grid")
    if not 0.0 < band_level < 1.0:
        raise ValueError("band_level must lie in (0, 1)")
    n = arr.size
    empirical = np.searchsorted(arr, grid, side="right") / n
    rng = as_generator(seed)
    uniforms = np.sort(rng.random((mc_draws, n)), axis=1)
    curves = np.empty((mc_draws, grid.size))
    for k in range(mc_draws):
        curves[k] = np.searchsorted(uniforms[k], grid, side="right") / n
    tail = 0.5 * (1.0 - band_level)
    band_lo = np.quantile(curves, tail, axis=0)
    band_hi = np.quantile(curves, 1.0 - tail, axis=0)
    return ReliabilityCurve(grid, empirical, band_lo, band_hi, band_level)


@dataclass
class MetricsReport:
    """Per-method metric values plus reliability-curve data.

    ``scores[method][metric]`` holds a float or None where a metric does
    not apply (e.g. NLL of a sampling-only baseline).  Curves are keyed by
    (method, curve kind).
    """

    scores: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)

    def set_score(self, method: str, metric: str, value: Optional[float]) -> None:
        self.scores.setdefault(method, {})[metric] = value

    def set_curve(self, method: str, kind: str, curve: ReliabilityCurve) -> None:
        self.curves[(method, kind)] = curve

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "scores": {
                method: dict(sorted(metrics.items()))
                for method, metrics in sorted(self.scores.items())
            },
            "curves": {
                f"{method}/{kind}": curve.to_rows()
                for (method, kind), curve in sorted(self.curves.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"
