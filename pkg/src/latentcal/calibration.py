"""Estimators of the CDF of calibration latent norms.

Three interchangeable maps:

* :class:`EmpiricalCdfMap` — the conformal step function
  ``#{L_i <= l} / (n + 1)`` augmented with an implicit +inf score.
* :class:`GammaKdeMap` — a mixture of Gamma kernels, one per calibration
  norm, each with mean at its norm; the shared rate is selected by
  10-fold cross-validation over a fixed 100-point log grid.
* :class:`SplineMap` — a monotone rational-quadratic spline wrapped in
  tanh/atanh so it transports a standard Gaussian onto the (standardized)
  norms; fitted by full-batch Adam on the NLL.

Smooth maps expose ``log_pdf`` and therefore support differentiable
recalibration; the empirical map does not.  By default both smooth
estimators operate on cube-root transformed norms, which generally makes
the density easier to estimate; the flag ``cube_root`` switches this off.

Fitted maps serialize to a versioned JSON document (see ``to_dict``)
that reconstructs the evaluator bit-for-bit.
"""

from __future__ import annotations

import abc
import json
import math
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import (
    gammainc,
    gammaincc,
    gammainccinv,
    gammaincinv,
    gammaln,
    ndtr,
    ndtri,
)

ArrayLike = Union[float, np.ndarray]

SERIAL_FORMAT = "latentcal/calibration-map"
SERIAL_VERSION = 1

_LOG_2PI = math.log(2.0 * math.pi)
_ZERO_NORM_CLAMP = 1e-12

__all__ = [
    "UnsupportedMapOperation",
    "CalibrationMap",
    "EmpiricalCdfMap",
    "GammaKdeMap",
    "SplineMap",
    "fit_empirical",
    "fit_gamma_kde",
    "fit_spline",
    "spline_bin_count",
    "gamma_kde_rate_grid",
    "calibration_map_from_dict",
    "save_calibration_map",
    "load_calibration_map",
]


class UnsupportedMapOperation(RuntimeError):
    """Raised when an operation needs a smooth map but got a step function."""


def _check_norms(norms: Sequence[float]) -> np.ndarray:
    arr = np.asarray(norms, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError("need at least one calibration norm")
    if not np.all(np.isfinite(arr)):
        raise ValueError("calibration norms must be finite")
    if np.any(arr < 0.0):
        raise ValueError("calibration norms must be nonnegative")
    return arr


def _coerce_levels(values: ArrayLike, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(values, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr, scalar


def _coerce_points(values: ArrayLike) -> tuple[np.ndarray, bool]:
    arr = np.asarray(values, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(np.isnan(arr)):
        raise ValueError("evaluation points must not be NaN")
    if np.any(arr < 0.0):
        raise ValueError("evaluation points must be nonnegative")
    return arr, scalar


def _unwrap(arr: np.ndarray, scalar: bool):
    return float(arr[0]) if scalar else arr


class CalibrationMap(abc.ABC):
    """CDF / quantile / (optionally) log-density over latent norms."""

    smooth: bool = False

    @property
    @abc.abstractmethod
    def n(self) -> int:
        """Number of calibration norms the map was fitted on."""

    @abc.abstractmethod
    def cdf(self, l: ArrayLike) -> ArrayLike: ...

    @abc.abstractmethod
    def survival(self, l: ArrayLike) -> ArrayLike:
        """P(L > l); evaluated directly, without 1 - cdf cancellation."""

    @abc.abstractmethod
    def quantile(self, p: ArrayLike) -> ArrayLike: ...

    @abc.abstractmethod
    def quantile_from_survival(self, q: ArrayLike) -> ArrayLike:
        """Upper-tail quantile at survival level q, accurate for tiny q."""

    def log_pdf(self, l: ArrayLike) -> ArrayLike:
        raise UnsupportedMapOperation(
            f"{type(self).__name__} has no density; use a smooth map"
        )

    @abc.abstractmethod
    def to_dict(self) -> dict: ...


# ---------------------------------------------------------------------------
# Empirical (conformal) map
# ---------------------------------------------------------------------------


class EmpiricalCdfMap(CalibrationMap):
    """Step-function CDF ``#{L_i <= l} / (n + 1)`` with an implicit +inf score.

    Quantiles are order statistics: level p maps to the ceil(p (n+1))-th
    smallest norm, or +inf past the sample.  This is exactly the split
    conformal construction, so sublevel sets of the induced PIT coincide
    with conformal prediction regions.
    """

    smooth = False

    def __init__(self, norms: Sequence[float]):
        self._sorted = np.sort(_check_norms(norms))

    @property
    def n(self) -> int:
        return int(self._sorted.size)

    @property
    def sorted_norms(self) -> np.ndarray:
        return self._sorted.copy()

    def cdf(self, l: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_points(l)
        counts = np.searchsorted(self._sorted, arr, side="right")
        return _unwrap(counts / (self.n + 1.0), scalar)

    def survival(self, l: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_points(l)
        counts = np.searchsorted(self._sorted, arr, side="right")
        return _unwrap((self.n + 1.0 - counts) / (self.n + 1.0), scalar)

    def quantile(self, p: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_levels(p, "probabilities")
        ranks = np.ceil(arr * (self.n + 1)).astype(int)
        out = np.empty_like(arr)
        out[ranks <= 0] = 0.0
        beyond = ranks > self.n
        out[beyond] = np.inf
        inside = (~beyond) & (ranks > 0)
        out[inside] = self._sorted[ranks[inside] - 1]
        return _unwrap(out, scalar)

    def quantile_from_survival(self, q: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_levels(q, "survival levels")
        return _unwrap(np.atleast_1d(self.quantile(1.0 - arr)), scalar)

    def to_dict(self) -> dict:
        return {
            "format": SERIAL_FORMAT,
            "version": SERIAL_VERSION,
            "kind": "empirical",
            "norms": self._sorted.tolist(),
        }


def fit_empirical(norms: Sequence[float]) -> EmpiricalCdfMap:
    """Fit the conformal step-function CDF. Requires n >= 1 finite norms."""
    return EmpiricalCdfMap(norms)


# ---------------------------------------------------------------------------
# Gamma-kernel KDE map
# ---------------------------------------------------------------------------


def gamma_kde_rate_grid() -> np.ndarray:
    """The fixed 100-point rate grid 10^(-5 + 10 i / 99), i = 0..99."""
    return 10.0 ** (-5.0 + 10.0 * np.arange(100) / 99.0)


class GammaKdeMap(CalibrationMap):
    """Mixture of Gamma kernels, one per calibration norm.

    Kernel i has shape ``s_i * rate`` and the shared ``rate``, hence mean
    ``s_i`` in the (possibly cube-root transformed) score space.  CDF and
    survival are mixture averages of regularized incomplete gamma
    functions; quantiles invert the mixture CDF by safeguarded Newton
    iteration (scalar calls go through Brent's method).
    """

    smooth = True

    def __init__(self, norms: Sequence[float], rate: float, cube_root: bool = True):
        arr = _check_norms(norms)
        if rate <= 0.0 or not math.isfinite(rate):
            raise ValueError("rate must be positive and finite")
        arr = np.maximum(arr, _ZERO_NORM_CLAMP)  # Gamma kernels need positive means
        self._norms = arr
        self.rate = float(rate)
        self.cube_root = bool(cube_root)
        self._scores = np.cbrt(arr) if cube_root else arr.copy()
        self._shapes = self._scores * self.rate
        self._log_kernel_const = self._shapes * math.log(self.rate) - gammaln(self._shapes)
        self._bracket_table: Optional[tuple[np.ndarray, np.ndarray]] = None

    @property
    def n(self) -> int:
        return int(self._norms.size)

    @property
    def norms(self) -> np.ndarray:
        return self._norms.copy()

    # -- transform helpers ---------------------------------------------------

    def _to_score(self, l: np.ndarray) -> np.ndarray:
        return np.cbrt(l) if self.cube_root else l

    def _from_score(self, s: np.ndarray) -> np.ndarray:
        return s**3 if self.cube_root else s

    def _log_jacobian(self, l: np.ndarray) -> np.ndarray:
        if not self.cube_root:
            return np.zeros_like(l)
        with np.errstate(divide="ignore"):
            return -math.log(3.0) - (2.0 / 3.0) * np.log(l)

    # -- mixture primitives in score space ------------------------------------

    def _cdf_score(self, s: np.ndarray) -> np.ndarray:
        out = np.empty_like(s)
        chunk = max(1, int(2_000_000 // max(self.n, 1)))
        for start in range(0, s.size, chunk):
            block = s[start : start + chunk, None]
            out[start : start + chunk] = gammainc(
                self._shapes[None, :], self.rate * block
            ).mean(axis=1)
        return out

    def _survival_score(self, s: np.ndarray) -> np.ndarray:
        out = np.empty_like(s)
        chunk = max(1, int(2_000_000 // max(self.n, 1)))
        for start in range(0, s.size, chunk):
            block = s[start : start + chunk, None]
            out[start : start + chunk] = gammaincc(
                self._shapes[None, :], self.rate * block
            ).mean(axis=1)
        return out

    def _log_pdf_score(self, s: np.ndarray) -> np.ndarray:
        out = np.empty_like(s)
        chunk = max(1, int(2_000_000 // max(self.n, 1)))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_s = np.where(s > 0.0, np.log(s), -np.inf)
            for start in range(0, s.size, chunk):
                sl = slice(start, start + chunk)
                exponents = (
                    self._log_kernel_const[None, :]
                    + (self._shapes[None, :] - 1.0) * log_s[sl, None]
                    - self.rate * s[sl, None]
                )
                m = np.max(exponents, axis=1)
                safe_m = np.where(np.isfinite(m), m, 0.0)
                total = np.sum(np.exp(exponents - safe_m[:, None]), axis=1)
                block = safe_m + np.log(total) - math.log(self.n)
                out[sl] = np.where(np.isfinite(m), block, m)
        return out

    # -- public surface --------------------------------------------------------

    def cdf(self, l: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_points(l)
        return _unwrap(self._cdf_score(self._to_score(arr)), scalar)

    def survival(self, l: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_points(l)
        return _unwrap(self._survival_score(self._to_score(arr)), scalar)

    def log_pdf(self, l: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_points(l)
        s = self._to_score(arr)
        out = self._log_pdf_score(s) + self._log_jacobian(arr)
        return _unwrap(out, scalar)

    def _support_bounds(self) -> tuple[float, float]:
        a_lo, a_hi = float(self._shapes.min()), float(self._shapes.max())
        s_lo = float(gammaincinv(a_lo, 1e-300)) / self.rate
        s_hi = float(gammainccinv(a_hi, 1e-300)) / self.rate
        # the mixture support is bounded by the widest kernels
        s_hi = max(s_hi, float(gammainccinv(a_lo, 1e-300)) / self.rate)
        return s_lo, s_hi

    def _bracket_init(self, p: np.ndarray) -> np.ndarray:
        if self._bracket_table is None:
            s_lo, s_hi = self._support_bounds()
            grid = np.geomspace(max(s_lo, 1e-300), s_hi, 512)
            probs = self._cdf_score(grid)
            keep = np.concatenate([[True], np.diff(probs) > 0.0])
            self._bracket_table = (probs[keep], grid[keep])
        probs, grid = self._bracket_table
        return np.interp(p, probs, grid, left=grid[0], right=grid[-1])

    def _quantile_score(self, p: np.ndarray) -> np.ndarray:
        # safeguarded Newton on the mixture CDF, iterating only the
        # still-unconverged points
        _, s_hi = self._support_bounds()
        s = np.clip(self._bracket_init(p), 1e-300, s_hi)
        lo = np.zeros_like(p)
        hi = np.full_like(p, s_hi)
        active = np.arange(p.size)
        for _ in range(120):
            f = self._cdf_score(s[active]) - p[active]
            above = f >= 0.0
            hi[active[above]] = np.minimum(hi[active[above]], s[active[above]])
            lo[active[~above]] = np.maximum(lo[active[~above]], s[active[~above]])
            keep = (np.abs(f) > 1e-13) & (hi[active] - lo[active] > 1e-15 * hi[active])
            active = active[keep]
            if active.size == 0:
                break
            f = f[keep]
            pdf = np.exp(self._log_pdf_score(s[active]))
            with np.errstate(divide="ignore", invalid="ignore"):
                candidate = s[active] - f / pdf
            bad = ~np.isfinite(candidate) | (candidate < lo[active]) | (candidate > hi[active])
            candidate[bad] = 0.5 * (lo[active][bad] + hi[active][bad])
            s[active] = candidate
        return s

    def quantile(self, p: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_levels(p, "probabilities")
        out = np.empty_like(arr)
        out[arr <= 0.0] = 0.0
        out[arr >= 1.0] = np.inf
        interior = (arr > 0.0) & (arr < 1.0)
        if np.any(interior):
            out[interior] = self._from_score(self._quantile_score(arr[interior]))
        return _unwrap(out, scalar)

    def quantile_from_survival(self, q: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_levels(q, "survival levels")
        out = np.empty_like(arr)
        out[arr <= 0.0] = np.inf
        out[arr >= 1.0] = 0.0
        interior = (arr > 0.0) & (arr < 1.0)
        if np.any(interior):
            out[interior] = self._from_score(self._quantile_survival_score(arr[interior]))
        return _unwrap(out, scalar)

    def _quantile_survival_score(self, q: np.ndarray) -> np.ndarray:
        # Newton on log survival; survival is a clean sum of gammaincc terms,
        # so tiny levels keep full relative precision.
        _, s_hi = self._support_bounds()
        log_q = np.log(q)
        s = np.clip(self._bracket_init(1.0 - q), 1e-300, s_hi)
        lo = np.zeros_like(q)
        hi = np.full_like(q, s_hi)
        active = np.arange(q.size)
        for _ in range(120):
            surv = self._survival_score(s[active])
            with np.errstate(divide="ignore"):
                g = np.log(surv) - log_q[active]
            below = g <= 0.0
            hi[active[below]] = np.minimum(hi[active[below]], s[active[below]])
            lo[active[~below]] = np.maximum(lo[active[~below]], s[active[~below]])
            keep = (np.abs(g) > 1e-12) & (hi[active] - lo[active] > 1e-15 * hi[active])
            active = active[keep]
            if active.size == 0:
                break
            g = g[keep]
            surv = surv[keep]
            pdf = np.exp(self._log_pdf_score(s[active]))
            with np.errstate(divide="ignore", invalid="ignore"):
                candidate = s[active] + g * surv / pdf
            bad = ~np.isfinite(candidate) | (candidate < lo[active]) | (candidate > hi[active])
            candidate[bad] = 0.5 * (lo[active][bad] + hi[active][bad])
            s[active] = candidate
        return s

    def to_dict(self) -> dict:
        return {
            "format": SERIAL_FORMAT,
            "version": SERIAL_VERSION,
            "kind": "gamma_kde",
            "rate": self.rate,
            "cube_root": self.cube_root,
            "norms": self._norms.tolist(),
        }


def fit_gamma_kde(
    norms: Sequence[float],
    cv_folds: int = 10,
    cube_root: bool = True,
    seed: int = 0,
) -> GammaKdeMap:
    """Fit a Gamma-kernel KDE map, selecting the rate by cross-validation.

    The rate minimizing the mean held-out negative log density over the
    fixed grid :func:`gamma_kde_rate_grid` wins; ties go to the smallest
    rate.  Folds are contiguous blocks of a seeded shuffle, so the fit is
    deterministic given (norms, seed).
    """
    arr = _check_norms(norms)
    if cv_folds < 2:
        raise ValueError("cv_folds must be at least 2")
    n = arr.size
    if n < cv_folds:
        raise ValueError(f"need at least cv_folds={cv_folds} norms, got {n}")
    arr = np.maximum(arr, _ZERO_NORM_CLAMP)
    scores = np.cbrt(arr) if cube_root else arr.copy()

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    fold_sizes = np.full(cv_folds, n // cv_folds)
    fold_sizes[: n % cv_folds] += 1
    fold_edges = np.concatenate([[0], np.cumsum(fold_sizes)])
    # reorder so folds are contiguous column blocks
    s = scores[order]
    log_s = np.log(s)
    fold_of = np.repeat(np.arange(cv_folds), fold_sizes)

    grid = gamma_kde_rate_grid()
    best_rate, best_nll = None, np.inf
    chunk = max(1, int(4_000_000 // n))
    for rate in grid:
        shapes = s * rate
        const = shapes * math.log(rate) - gammaln(shapes)
        total = 0.0
        valid = True
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            rows = slice(start, stop)
            exponents = (
                const[None, :]
                + (shapes[None, :] - 1.0) * log_s[rows, None]
                - rate * s[rows, None]
            )
            row_max = exponents.max(axis=1)
            scaled = np.exp(exponents - row_max[:, None])
            # per-fold partial sums, then zero out each row's own fold
            fold_sums = np.add.reduceat(scaled, fold_edges[:-1], axis=1)
            fold_sums[np.arange(stop - start), fold_of[rows]] = 0.0
            held_out = fold_sums.sum(axis=1)
            with np.errstate(divide="ignore"):
                log_dens = row_max + np.log(held_out) - np.log(n - fold_sizes[fold_of[rows]])
            if np.any(~np.isfinite(log_dens)):
                valid = False
                break
            total += float(-log_dens.sum())
        if not valid:
            continue
        nll = total / n
        if nll < best_nll:
            best_nll, best_rate = nll, float(rate)
    if best_rate is None:
        raise RuntimeError("cross-validation failed for every candidate rate")
    return GammaKdeMap(arr, best_rate, cube_root=cube_root)


# ---------------------------------------------------------------------------
# Rational-quadratic spline map
# ---------------------------------------------------------------------------


def spline_bin_count(n: int) -> int:
    """Bin count schedule by sample size; 10 bins beyond the tabulated range."""
    for bound, bins in ((30, 4), (50, 5), (70, 6), (80, 7), (90, 8), (100, 9)):
        if n <= bound:
            return bins
    return 10


_TAIL_CUT = 15.0  # |eps| beyond which the tanh wrapper is numerically linear
_MIN_DERIV = 1e-6
_MIN_BIN = 1e-4


def _softmax(raw: np.ndarray) -> np.ndarray:
    shifted = raw - raw.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _softplus(raw: np.ndarray) -> np.ndarray:
    return np.logaddexp(raw, 0.0)


def _knots_from_raw(raw: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw parameters (..., 3B-1) -> x knots, y knots, derivatives (..., B+1)."""
    raw_w = raw[..., :bins]
    raw_h = raw[..., bins : 2 * bins]
    raw_d = raw[..., 2 * bins :]
    widths = _MIN_BIN + (2.0 - bins * _MIN_BIN) * _softmax(raw_w)
    heights = _MIN_BIN + (2.0 - bins * _MIN_BIN) * _softmax(raw_h)
    shape = raw.shape[:-1]
    xk = np.concatenate(
        [np.full(shape + (1,), -1.0), -1.0 + np.cumsum(widths, axis=-1)], axis=-1
    )
    yk = np.concatenate(
        [np.full(shape + (1,), -1.0), -1.0 + np.cumsum(heights, axis=-1)], axis=-1
    )
    xk[..., -1] = 1.0
    yk[..., -1] = 1.0
    ones = np.ones(shape + (1,))
    derivs = np.concatenate([ones, _MIN_DERIV + _softplus(raw_d), ones], axis=-1)
    return xk, yk, derivs


def _bin_index(knots: np.ndarray, t: np.ndarray) -> np.ndarray:
    # knots (..., B+1), t (..., m): count of interior knots <= t
    interior = knots[..., None, 1:-1]
    return np.sum(interior <= t[..., :, None], axis=-1)


def _take(knots: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(np.broadcast_to(knots[..., None, :], idx.shape + (knots.shape[-1],)), idx[..., None], axis=-1)[..., 0]


def _rq_forward(xk, yk, dv, t):
    """Spline value and log derivative at t in [-1, 1]; batched over knots."""
    k = _bin_index(xk, t)
    x0, x1 = _take(xk, k), _take(xk, k + 1)
    y0, y1 = _take(yk, k), _take(yk, k + 1)
    d0, d1 = _take(dv, k), _take(dv, k + 1)
    w = x1 - x0
    h = y1 - y0
    slope = h / w
    xi = np.clip((t - x0) / w, 0.0, 1.0)
    om = xi * (1.0 - xi)
    den = slope + (d1 + d0 - 2.0 * slope) * om
    val = y0 + h * (slope * xi * xi + d0 * om) / den
    log_deriv = (
        2.0 * np.log(slope)
        + np.log(d1 * xi * xi + 2.0 * slope * om + d0 * (1.0 - xi) ** 2)
        - 2.0 * np.log(den)
    )
    return val, log_deriv


def _rq_inverse(xk, yk, dv, v):
    """Inverse spline t = Phi^{-1}(v) and log Phi'(t); batched over knots."""
    k = _bin_index(yk, v)
    x0, x1 = _take(xk, k), _take(xk, k + 1)
    y0, y1 = _take(yk, k), _take(yk, k + 1)
    d0, d1 = _take(dv, k), _take(dv, k + 1)
    w = x1 - x0
    h = y1 - y0
    slope = h / w
    dy = np.clip(v - y0, 0.0, h)
    term = dy * (d1 + d0 - 2.0 * slope)
    a = h * (slope - d0) + term
    b = h * d0 - term
    c = -slope * dy
    disc = np.maximum(b * b - 4.0 * a * c, 0.0)
    denom = -b - np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = np.where(denom != 0.0, 2.0 * c / np.where(denom != 0.0, denom, 1.0), 0.0)
    xi = np.clip(xi, 0.0, 1.0)
    t = x0 + xi * w
    om = xi * (1.0 - xi)
    den = slope + (d1 + d0 - 2.0 * slope) * om
    log_deriv = (
        2.0 * np.log(slope)
        + np.log(d1 * xi * xi + 2.0 * slope * om + d0 * (1.0 - xi) ** 2)
        - 2.0 * np.log(den)
    )
    return t, log_deriv


def _log_sech2(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2), stable for large |u|."""
    au = np.abs(u)
    return 2.0 * (math.log(2.0) - au - np.log1p(np.exp(-2.0 * au)))


def _psi_forward(xk, yk, dv, u):
    """Psi(u) = atanh(Phi(tanh(u))) with linear tails beyond |u| = 15."""
    u = np.asarray(u, dtype=float)
    core = np.clip(u, -_TAIL_CUT, _TAIL_CUT)
    t = np.tanh(core)
    v, _ = _rq_forward(xk, yk, dv, t)
    v = np.clip(v, -1.0 + 1e-16, 1.0 - 1e-16)
    psi_core = np.arctanh(v)
    return psi_core + (u - core)


def _psi_inverse_with_log_density(xk, yk, dv, w):
    """eps = Psi^{-1}(w) plus log d eps / d w (the inverse-map Jacobian)."""
    w = np.asarray(w, dtype=float)
    # tail cut images, one per parameter set, define where Psi turns linear
    cut = np.full(xk.shape[:-1] + (1,), _TAIL_CUT)
    w_hi = _psi_forward(xk, yk, dv, cut)
    w_lo = _psi_forward(xk, yk, dv, -cut)
    core_w = np.clip(w, w_lo, w_hi)
    v = np.tanh(core_w)
    t, log_phi_deriv = _rq_inverse(xk, yk, dv, np.clip(v, -1.0 + 1e-16, 1.0 - 1e-16))
    t = np.clip(t, -1.0 + 1e-16, 1.0 - 1e-16)
    eps_core = np.arctanh(t)
    # d eps / d w = (1 - v^2) / (Phi'(t) (1 - t^2))
    log_jac = _log_sech2(core_w) - log_phi_deriv - np.log(1.0 - t * t)
    eps = eps_core + (w - core_w)
    log_jac = np.where(w == core_w, log_jac, 0.0)
    return eps, log_jac


class SplineMap(CalibrationMap):
    """Monotone rational-quadratic spline transport of a standard Gaussian.

    The fitted map Psi sends N(0, 1) onto the standardized (and by default
    cube-root transformed) norms, so every operation is a closed-form
    composition of the spline, tanh/atanh, and the normal CDF; no
    root-finding is involved.
    """

    smooth = True

    def __init__(
        self,
        x_knots: np.ndarray,
        y_knots: np.ndarray,
        derivatives: np.ndarray,
        mean: float,
        std: float,
        n: int,
        cube_root: bool = True,
    ):
        self._xk = np.asarray(x_knots, dtype=float)
        self._yk = np.asarray(y_knots, dtype=float)
        self._dv = np.asarray(derivatives, dtype=float)
        if not (self._xk.shape == self._yk.shape == self._dv.shape):
            raise ValueError("knot arrays must share one shape")
        if np.any(np.diff(self._xk) <= 0.0) or np.any(np.diff(self._yk) <= 0.0):
            raise ValueError("knots must be strictly increasing")
        if np.any(self._dv <= 0.0):
            raise ValueError("derivatives must be positive")
        if std <= 0.0:
            raise ValueError("std must be positive")
        self.mean = float(mean)
        self.std = float(std)
        self._n = int(n)
        self.cube_root = bool(cube_root)

    @property
    def n(self) -> int:
        return self._n

    @property
    def bins(self) -> int:
        return self._xk.size - 1

    def _to_score(self, l: np.ndarray) -> np.ndarray:
        s = np.cbrt(l) if self.cube_root else l
        return (s - self.mean) / self.std

    def _from_score(self, w: np.ndarray) -> np.ndarray:
        s = self.mean + self.std * w
        s = np.maximum(s, 0.0)  # norms live on [0, inf)
        return s**3 if self.cube_root else s

    def cdf(self, l: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_points(l)
        finite = np.isfinite(arr)
        out = np.ones_like(arr)
        eps, _ = _psi_inverse_with_log_density(
            self._xk, self._yk, self._dv, self._to_score(arr[finite])
        )
        out[finite] = ndtr(eps)
        return _unwrap(out, scalar)

    def survival(self, l: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_points(l)
        finite = np.isfinite(arr)
        out = np.zeros_like(arr)
        eps, _ = _psi_inverse_with_log_density(
            self._xk, self._yk, self._dv, self._to_score(arr[finite])
        )
        out[finite] = ndtr(-eps)
        return _unwrap(out, scalar)

    def log_pdf(self, l: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_points(l)
        w = self._to_score(arr)
        eps, log_jac = _psi_inverse_with_log_density(self._xk, self._yk, self._dv, w)
        out = -0.5 * eps * eps - 0.5 * _LOG_2PI + log_jac - math.log(self.std)
        if self.cube_root:
            with np.errstate(divide="ignore"):
                out = out - math.log(3.0) - (2.0 / 3.0) * np.log(arr)
        return _unwrap(out, scalar)

    def quantile(self, p: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_levels(p, "probabilities")
        out = np.empty_like(arr)
        out[arr <= 0.0] = 0.0
        out[arr >= 1.0] = np.inf
        interior = (arr > 0.0) & (arr < 1.0)
        w = _psi_forward(self._xk, self._yk, self._dv, ndtri(arr[interior]))
        out[interior] = self._from_score(w)
        return _unwrap(out, scalar)

    def quantile_from_survival(self, q: ArrayLike) -> ArrayLike:
        arr, scalar = _coerce_levels(q, "survival levels")
        out = np.empty_like(arr)
        out[arr <= 0.0] = np.inf
        out[arr >= 1.0] = 0.0
        interior = (arr > 0.0) & (arr < 1.0)
        w = _psi_forward(self._xk, self._yk, self._dv, -ndtri(arr[interior]))
        out[interior] = self._from_score(w)
        return _unwrap(out, scalar)

    def to_dict(self) -> dict:
        return {
            "format": SERIAL_FORMAT,
            "version": SERIAL_VERSION,
            "kind": "spline",
            "x_knots": self._xk.tolist(),
            "y_knots": self._yk.tolist(),
            "derivatives": self._dv.tolist(),
            "mean": self.mean,
            "std": self.std,
            "n": self._n,
            "cube_root": self.cube_root,
        }


def _spline_nll(raw_batch: np.ndarray, bins: int, data: np.ndarray) -> np.ndarray:
    """Mean NLL of standardized data under the spline model, batched over params."""
    xk, yk, dv = _knots_from_raw(raw_batch, bins)
    eps, log_jac = _psi_inverse_with_log_density(xk, yk, dv, np.broadcast_to(data, raw_batch.shape[:-1] + data.shape))
    ll = -0.5 * eps * eps - 0.5 * _LOG_2PI + log_jac
    return -np.mean(ll, axis=-1)


def fit_spline(
    norms: Sequence[float],
    optimizer_budget: int = 400,
    cube_root: bool = True,
    learning_rate: float = 0.05,
    bins: Optional[int] = None,
) -> SplineMap:
    """Fit the spline map by full-batch Adam on the NLL.

    Standardizes the (transformed) norms, starts from the identity spline,
    and stops early once the loss has not improved by 1e-4 for 50 epochs.
    ``optimizer_budget`` caps the epoch count.  Gradients are central
    finite differences, evaluated for all coordinates in one batched pass.
    """
    arr = _check_norms(norms)
    n = arr.size
    if n < 5:
        raise ValueError("spline fitting needs at least 5 norms")
    arr = np.maximum(arr, _ZERO_NORM_CLAMP)
    scores = np.cbrt(arr) if cube_root else arr.copy()
    mean = float(scores.mean())
    std = float(scores.std())
    if std <= 0.0:
        raise ValueError("calibration norms are degenerate (zero variance)")
    data = (scores - mean) / std

    n_bins = bins if bins is not None else spline_bin_count(n)
    n_params = 3 * n_bins - 1
    theta = np.zeros(n_params)
    theta[2 * n_bins :] = math.log(math.e - 1.0)  # softplus^{-1}(1): identity slope

    m_adam = np.zeros(n_params)
    v_adam = np.zeros(n_params)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    h = 1e-5

    best_loss = float(_spline_nll(theta[None, :], n_bins, data)[0])
    best_theta = theta.copy()
    stall = 0
    for epoch in range(1, max(1, optimizer_budget) + 1):
        perturbed = np.repeat(theta[None, :], 2 * n_params, axis=0)
        idx = np.arange(n_params)
        perturbed[2 * idx, idx] += h
        perturbed[2 * idx + 1, idx] -= h
        losses = _spline_nll(perturbed, n_bins, data)
        if not np.all(np.isfinite(losses)):
            raise RuntimeError(
                f"spline NLL became non-finite at epoch {epoch}; "
                f"bins={n_bins}, lr={learning_rate}"
            )
        grad = (losses[0::2] - losses[1::2]) / (2.0 * h)
        m_adam = beta1 * m_adam + (1.0 - beta1) * grad
        v_adam = beta2 * v_adam + (1.0 - beta2) * grad * grad
        m_hat = m_adam / (1.0 - beta1**epoch)
        v_hat = v_adam / (1.0 - beta2**epoch)
        theta = theta - learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)
        loss = float(_spline_nll(theta[None, :], n_bins, data)[0])
        if not math.isfinite(loss):
            raise RuntimeError(
                f"spline NLL diverged at epoch {epoch}; bins={n_bins}, lr={learning_rate}"
            )
        if loss < best_loss - 1e-4:
            best_loss, best_theta, stall = loss, theta.copy(), 0
        else:
            if loss < best_loss:
                best_loss, best_theta = loss, theta.copy()
            stall += 1
            if stall >= 50:
                break
    xk, yk, dv = _knots_from_raw(best_theta, n_bins)
    return SplineMap(xk, yk, dv, mean, std, n, cube_root=cube_root)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def calibration_map_from_dict(payload: dict) -> CalibrationMap:
    if payload.get("format") != SERIAL_FORMAT:
        raise ValueError(f"not a calibration-map document: {payload.get('format')!r}")
    if payload.get("version") != SERIAL_VERSION:
        raise ValueError(f"unsupported calibration-map version: {payload.get('version')!r}")
    kind = payload.get("kind")
    if kind == "empirical":
        return EmpiricalCdfMap(np.asarray(payload["norms"], dtype=float))
    if kind == "gamma_kde":
        return GammaKdeMap(
            np.asarray(payload["norms"], dtype=float),
            rate=float(payload["rate"]),
            cube_root=bool(payload["cube_root"]),
        )
    if kind == "spline":
        return SplineMap(
            np.asarray(payload["x_knots"], dtype=float),
            np.asarray(payload["y_knots"], dtype=float),
            np.asarray(payload["derivatives"], dtype=float),
            mean=float(payload["mean"]),
            std=float(payload["std"]),
            n=int(payload["n"]),
            cube_root=bool(payload["cube_root"]),
        )
    raise ValueError(f"unknown calibration-map kind: {kind!r}")


def save_calibration_map(cal_map: CalibrationMap, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(cal_map.to_dict(), handle, sort_keys=True, indent=2)
        handle.write("\n")


def load_calibration_map(path: str) -> CalibrationMap:
    with open(path, encoding="utf-8") as handle:
        return calibration_map_from_dict(json.load(handle))
