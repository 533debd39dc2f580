"""Distributions of the Euclidean norm of standard latent vectors.

Two families are supported:

* ``chi``: the norm of a standard Gaussian vector in ``d`` dimensions
  (Chi distribution with ``d`` degrees of freedom).
* ``ball``: the norm of a uniform draw from the unit ball in ``d``
  dimensions (Beta(d, 1) distribution on [0, 1]).

All evaluators are double precision and expose log-space tails
(``log_cdf`` / ``log_survival``) so that probabilities far below machine
epsilon remain finite and strictly monotone.  This matters for very large
``d``, where essentially all probability mass sits in a band of width
O(1) around ``sqrt(d)`` and the plain CDF saturates to 0.0 / 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
from scipy.special import (
    gammainc,
    gammaincc,
    gammainccinv,
    gammaincinv,
    gammaln,
)

ArrayLike = Union[float, np.ndarray]

_LOG2 = math.log(2.0)

__all__ = ["NormLaw"]


def _log1mexp(u: np.ndarray) -> np.ndarray:
    """log(1 - exp(u)) for u <= 0 without catastrophic cancellation."""
    u = np.asarray(u, dtype=float)
    out = np.full_like(u, -np.inf)
    small = u > -_LOG2  # exp(u) close to 1: use expm1
    with np.errstate(divide="ignore", invalid="ignore"):
        out[small] = np.log(-np.expm1(u[small]))
        big = ~small & (u > -np.inf)
        out[big] = np.log1p(-np.exp(u[big]))
    return out


def _log_reg_lower_gamma_series(a: float, x: float) -> float:
    """log P(a, x) by the ascending series, for use when P underflows.

    Converges for x < a + 1; only called in the deep lower tail where the
    term ratio x / (a + k) is well below one.
    """
    if x <= 0.0:
        return -np.inf
    total = 1.0
    term = 1.0
    denom = a
    for _ in range(100_000):
        denom += 1.0
        term *= x / denom
        total += term
        if term < total * 1e-17:
            break
    return a * math.log(x) - x - gammaln(a + 1.0) + math.log(total)


def _log_reg_upper_gamma_cf(a: float, x: float) -> float:
    """log Q(a, x) by the Legendre continued fraction (modified Lentz).

    Accurate for x > a; only called in the deep upper tail where Q
    underflows in direct evaluation.
    """
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, 100_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return a * math.log(x) - x - gammaln(a) + math.log(h)


def _coerce(values: ArrayLike, *, allow_inf: bool = True) -> tuple[np.ndarray, bool]:
    arr = np.asarray(values, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(np.isnan(arr)):
        raise ValueError("norm values must not be NaN")
    if np.any(arr < 0.0):
        raise ValueError("norm values must be nonnegative")
    if not allow_inf and np.any(np.isinf(arr)):
        raise ValueError("norm values must be finite")
    return arr, scalar


def _unwrap(arr: np.ndarray, scalar: bool) -> ArrayLike:
    return float(arr[0]) if scalar else arr


@dataclass(frozen=True)
class NormLaw:
    """Law of the Euclidean norm of a standard latent vector.

    Parameters
    ----------
    family : {"chi", "ball"}
        "chi" for a standard Gaussian latent, "ball" for a uniform draw
        from the unit ball.
    d : int
        Latent dimension, at least 1.
    """

    family: Literal["chi", "ball"]
    d: int

    def __post_init__(self) -> None:
        if self.family not in ("chi", "ball"):
            raise ValueError(f"unknown norm-law family: {self.family!r}")
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ValueError("dimension d must be a positive integer")
        object.__setattr__(self, "d", int(self.d))

    @classmethod
    def chi(cls, d: int) -> "NormLaw":
        return cls("chi", d)

    @classmethod
    def uniform_ball(cls, d: int) -> "NormLaw":
        return cls("ball", d)

    # -- CDF ---------------------------------------------------------------

    def cdf(self, l: ArrayLike) -> ArrayLike:
        """P(norm <= l). Nondecreasing, 0 at l=0, 1 in the limit."""
        arr, scalar = _coerce(l)
        if self.family == "chi":
            out = gammainc(self.d / 2.0, 0.5 * arr * arr)
        else:
            out = np.minimum(arr, 1.0) ** self.d
        return _unwrap(out, scalar)

    def log_cdf(self, l: ArrayLike) -> ArrayLike:
        """log P(norm <= l), finite far into the lower tail."""
        arr, scalar = _coerce(l)
        if self.family == "ball":
            with np.errstate(divide="ignore"):
                out = self.d * np.log(np.minimum(arr, 1.0))
            return _unwrap(out, scalar)
        a = self.d / 2.0
        x = 0.5 * arr * arr
        p = gammainc(a, x)
        q = gammaincc(a, x)
        out = np.empty_like(arr)
        hi = q <= 0.5
        out[hi] = np.log1p(-q[hi])
        lo = ~hi & (p > 0.0)
        with np.errstate(divide="ignore"):
            out[lo] = np.log(p[lo])
        deep = ~hi & ~lo
        if np.any(deep):
            out[deep] = [
                _log_reg_lower_gamma_series(a, xi) for xi in x[deep]
            ]
        return _unwrap(out, scalar)

    def log_survival(self, l: ArrayLike) -> ArrayLike:
        """log P(norm > l), finite far into the upper tail."""
        arr, scalar = _coerce(l)
        if self.family == "ball":
            with np.errstate(divide="ignore"):
                u = self.d * np.log(np.minimum(arr, 1.0))
            out = _log1mexp(u)
            return _unwrap(out, scalar)
        a = self.d / 2.0
        x = 0.5 * arr * arr
        p = gammainc(a, x)
        q = gammaincc(a, x)
        out = np.empty_like(arr)
        lo = p <= 0.5
        out[lo] = np.log1p(-p[lo])
        mid = ~lo & (q > 0.0)
        with np.errstate(divide="ignore"):
            out[mid] = np.log(q[mid])
        deep = ~lo & ~mid
        if np.any(deep):
            out[deep] = [
                _log_reg_upper_gamma_cf(a, xi) for xi in x[deep]
            ]
        return _unwrap(out, scalar)

    # -- Quantiles ----------------------------------------------------------

    def quantile(self, p: ArrayLike) -> ArrayLike:
        """Inverse CDF. quantile(0) = 0; quantile(1) = sup of the support."""
        arr = np.asarray(p, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.family == "chi":
            out = np.sqrt(2.0 * gammaincinv(self.d / 2.0, arr))
            out[arr >= 1.0] = np.inf
        else:
            with np.errstate(divide="ignore"):
                out = np.exp(np.log(arr) / self.d)
        out[arr <= 0.0] = 0.0
        return _unwrap(out, scalar)

    def quantile_from_survival(self, q: ArrayLike) -> ArrayLike:
        """Inverse survival function; accurate for survival levels below eps."""
        arr = np.asarray(q, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("survival levels must lie in [0, 1]")
        if self.family == "chi":
            out = np.sqrt(2.0 * gammainccinv(self.d / 2.0, arr))
        else:
            out = np.exp(np.log1p(-arr) / self.d)
            out[arr >= 1.0] = 0.0
        return _unwrap(out, scalar)

    # -- Density ------------------------------------------------------------

    def log_pdf(self, l: ArrayLike) -> ArrayLike:
        """Log density of the norm.

        Outside the open support the limit value is returned (-inf except
        at boundary points where the closed form has a finite limit, e.g.
        d = 1 at l = 0).
        """
        arr, scalar = _coerce(l, allow_inf=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_l = np.log(arr)
            if self.d == 1:
                radial = np.zeros_like(arr)
            else:
                radial = (self.d - 1) * log_l
            if self.family == "chi":
                const = (1.0 - self.d / 2.0) * _LOG2 - gammaln(self.d / 2.0)
                out = const + radial - 0.5 * arr * arr
            else:
                out = math.log(self.d) + radial
                out[arr > 1.0] = -np.inf
        return _unwrap(out, scalar)
