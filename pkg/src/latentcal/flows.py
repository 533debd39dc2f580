"""Conditional-flow abstraction, analytic flows, and synthetic ground truth.

A conditional flow is an invertible map ``T(z; x)`` from latent vectors to
responses.  The package never trains flows; it consumes them.  Analytic
affine flows and deliberately misspecified synthetic tasks ship here so
the recalibration machinery can be validated against exact oracles.

External (e.g. neural) flows plug in through two surfaces:

* :class:`TabulatedFlow` — precomputed ``(x, y, z, inverse_log_det)``
  records, loadable from CSV.
* :class:`SubprocessFlow` — a child process speaking newline-delimited
  JSON: one ``{"x": [...], "y": [...]}`` request per line, answered by
  ``{"z": [...], "inverse_log_det": float}``.
"""

from __future__ import annotations

import abc
import csv
import json
import math
import subprocess
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, ndtr, ndtri

from latentcal._util import SeedLike, as_generator, as_row_matrix
from latentcal.norm_laws import NormLaw

__all__ = [
    "FlowInversionError",
    "LatentDistribution",
    "ConditionalFlow",
    "AffineGaussianFlow",
    "GaussianCdfFlow",
    "TabulatedFlow",
    "SubprocessFlow",
    "StandardizedFlow",
    "SyntheticTask",
    "make_gaussian_task",
    "make_univariate_cdf_task",
    "get_task",
    "TASK_NAMES",
]

_LOG_2PI = math.log(2.0 * math.pi)


class FlowInversionError(RuntimeError):
    """Raised when a flow inversion yields non-finite latents."""


@dataclass(frozen=True)
class LatentDistribution:
    """Latent law of a flow: standard Gaussian, uniform ball, or U(0, 1).

    The ``uniform_interval`` kind is the univariate special case used when
    the flow inverse is itself a predictive CDF; its norm law coincides
    with the uniform-ball law at d = 1.
    """

    kind: Literal["gaussian", "uniform_ball", "uniform_interval"]
    d: int

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "uniform_ball", "uniform_interval"):
            raise ValueError(f"unknown latent kind: {self.kind!r}")
        if self.d < 1:
            raise ValueError("latent dimension must be positive")
        if self.kind == "uniform_interval" and self.d != 1:
            raise ValueError("uniform_interval latent requires d = 1")

    @property
    def norm_law(self) -> NormLaw:
        if self.kind == "gaussian":
            return NormLaw.chi(self.d)
        return NormLaw.uniform_ball(self.d)

    def log_density(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        sq = np.sum(z * z, axis=-1)
        if self.kind == "gaussian":
            return -0.5 * sq - 0.5 * self.d * _LOG_2PI
        if self.kind == "uniform_ball":
            log_volume = 0.5 * self.d * math.log(math.pi) - gammaln(self.d / 2.0 + 1.0)
            return np.where(sq <= 1.0, -log_volume, -np.inf)
        inside = (z[..., 0] >= 0.0) & (z[..., 0] <= 1.0)
        return np.where(inside, 0.0, -np.inf)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be at least 1")
        if self.kind == "gaussian":
            return rng.standard_normal((count, self.d))
        if self.kind == "uniform_interval":
            return rng.random((count, 1))
        direction = rng.standard_normal((count, self.d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = rng.random(count) ** (1.0 / self.d)
        return direction * radius[:, None]


class ConditionalFlow(abc.ABC):
    """Invertible conditional map between latent vectors and responses.

    Subclasses implement ``forward`` and the fused ``inverse`` (latent plus
    log |det| of the inverse Jacobian, which share work).  Both accept a
    single covariate vector or a batch of rows; a single covariate is
    broadcast across a batch of responses.
    """

    latent: LatentDistribution

    @property
    def d(self) -> int:
        return self.latent.d

    @property
    @abc.abstractmethod
    def covariate_dim(self) -> int: ...

    @abc.abstractmethod
    def forward(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Map latents to responses: T(z; x)."""

    @abc.abstractmethod
    def inverse(self, y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (z, log |det d z / d y|) with z the recovered latent."""

    # -- derived operations --------------------------------------------------

    def latent_norm(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Euclidean norm of the latent recovered at (x, y)."""
        y_arr, single = as_row_matrix(y, self.d, "y")
        z, _ = self.inverse(y_arr, x)
        if not np.all(np.isfinite(z)):
            raise FlowInversionError("flow inversion produced non-finite latents")
        norms = np.linalg.norm(z, axis=-1)
        return float(norms[0]) if single else norms

    def log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Model log density at (x, y) via change of variables."""
        y_arr, single = as_row_matrix(y, self.d, "y")
        z, log_det = self.inverse(y_arr, x)
        if not np.all(np.isfinite(z)):
            raise FlowInversionError("flow inversion produced non-finite latents")
        out = self.latent.log_density(z) + log_det
        return float(out[0]) if single else out

    def sample(self, x: np.ndarray, count: int, seed: SeedLike) -> np.ndarray:
        """Draw ``count`` responses at covariate ``x``; seeded, reproducible."""
        rng = as_generator(seed)
        z = self.latent.sample(rng, count)
        x_arr = np.asarray(x, dtype=float)
        if x_arr.ndim == 1:
            x_arr = np.broadcast_to(x_arr, (count, x_arr.shape[0]))
        return self.forward(z, x_arr)


def _broadcast_x(x: np.ndarray, n_rows: int, p: int) -> np.ndarray:
    x_arr = np.asarray(x, dtype=float)
    if x_arr.ndim == 1:
        if x_arr.shape[0] != p:
            raise ValueError(f"x has length {x_arr.shape[0]}, expected {p}")
        return np.broadcast_to(x_arr, (n_rows, p))
    if x_arr.shape != (n_rows, p):
        raise ValueError(f"x must be ({n_rows}, {p}), got {x_arr.shape}")
    return x_arr


class AffineGaussianFlow(ConditionalFlow):
    """T(z; x) = mean(x) + scale @ z with lower-triangular positive scale.

    ``mean_fn`` maps a batch of covariate rows to a batch of mean vectors.
    ``scale`` is a constant (d, d) lower-triangular matrix; the induced
    predictive law at x is N(mean(x), scale @ scale.T).
    """

    def __init__(
        self,
        mean_fn: Callable[[np.ndarray], np.ndarray],
        scale: np.ndarray,
        covariate_dim: int,
        latent: Optional[LatentDistribution] = None,
    ):
        scale = np.asarray(scale, dtype=float)
        if scale.ndim != 2 or scale.shape[0] != scale.shape[1]:
            raise ValueError("scale must be a square matrix")
        if not np.allclose(scale, np.tril(scale)):
            raise ValueError("scale must be lower triangular")
        if np.any(np.diag(scale) <= 0.0):
            raise ValueError("scale must have strictly positive diagonal")
        d = scale.shape[0]
        self.latent = latent or LatentDistribution("gaussian", d)
        if self.latent.d != d:
            raise ValueError("latent dimension does not match scale")
        self.mean_fn = mean_fn
        self.scale = scale
        self._covariate_dim = covariate_dim
        self._log_det_inverse = -float(np.sum(np.log(np.diag(scale))))

    @property
    def covariate_dim(self) -> int:
        return self._covariate_dim

    def forward(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        z_arr, single = as_row_matrix(z, self.d, "z")
        x_arr = _broadcast_x(x, z_arr.shape[0], self.covariate_dim)
        y = self.mean_fn(x_arr) + z_arr @ self.scale.T
        return y[0] if single else y

    def inverse(self, y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y_arr, single = as_row_matrix(y, self.d, "y")
        x_arr = _broadcast_x(x, y_arr.shape[0], self.covariate_dim)
        centered = y_arr - self.mean_fn(x_arr)
        z = solve_triangular(self.scale, centered.T, lower=True).T
        log_det = np.full(y_arr.shape[0], self._log_det_inverse)
        if single:
            return z[0], float(log_det[0])
        return z, log_det


class GaussianCdfFlow(ConditionalFlow):
    """Univariate flow whose inverse is a Gaussian predictive CDF.

    The latent is U(0, 1) and T^{-1}(y; x) = Phi((y - mean(x)) / sd(x)),
    which makes quantile-style recalibration a special case of the radial
    machinery.
    """

    def __init__(
        self,
        mean_fn: Callable[[np.ndarray], np.ndarray],
        sd_fn: Callable[[np.ndarray], np.ndarray],
        covariate_dim: int,
    ):
        self.latent = LatentDistribution("uniform_interval", 1)
        self.mean_fn = mean_fn
        self.sd_fn = sd_fn
        self._covariate_dim = covariate_dim

    @property
    def covariate_dim(self) -> int:
        return self._covariate_dim

    def _moments(self, x_arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu = np.asarray(self.mean_fn(x_arr), dtype=float).reshape(-1)
        sd = np.asarray(self.sd_fn(x_arr), dtype=float).reshape(-1)
        if np.any(sd <= 0.0):
            raise ValueError("predictive standard deviations must be positive")
        return mu, sd

    def forward(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        z_arr, single = as_row_matrix(z, 1, "z")
        x_arr = _broadcast_x(x, z_arr.shape[0], self.covariate_dim)
        mu, sd = self._moments(x_arr)
        y = mu + sd * ndtri(np.clip(z_arr[:, 0], 1e-300, 1.0 - 1e-16))
        y = y[:, None]
        return y[0] if single else y

    def inverse(self, y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y_arr, single = as_row_matrix(y, 1, "y")
        x_arr = _broadcast_x(x, y_arr.shape[0], self.covariate_dim)
        mu, sd = self._moments(x_arr)
        standardized = (y_arr[:, 0] - mu) / sd
        z = ndtr(standardized)[:, None]
        log_det = -0.5 * standardized**2 - 0.5 * _LOG_2PI - np.log(sd)
        if single:
            return z[0], float(log_det[0])
        return z, log_det


class TabulatedFlow(ConditionalFlow):
    """Evaluation-only flow backed by precomputed inversion records.

    Each record ties a (x, y) pair to its latent z and inverse log-det.
    Lookup is exact on the float64 bit patterns, so the records must be
    produced for the very same arrays that will be queried.  ``forward``
    and ``sample`` are unavailable.
    """

    def __init__(
        self,
        xs: np.ndarray,
        ys: np.ndarray,
        zs: np.ndarray,
        inverse_log_dets: np.ndarray,
        latent: LatentDistribution,
    ):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        zs = np.asarray(zs, dtype=float)
        lds = np.asarray(inverse_log_dets, dtype=float).reshape(-1)
        if not (xs.shape[0] == ys.shape[0] == zs.shape[0] == lds.shape[0]):
            raise ValueError("tabulated arrays must share their first dimension")
        if ys.shape[1] != latent.d or zs.shape[1] != latent.d:
            raise ValueError("response/latent width must match the latent dimension")
        self.latent = latent
        self._covariate_width = xs.shape[1]
        self._table = {
            (xs[i].tobytes(), ys[i].tobytes()): (zs[i], lds[i])
            for i in range(xs.shape[0])
        }

    @classmethod
    def from_csv(cls, path: str, covariate_dim: int, d: int, latent: LatentDistribution) -> "TabulatedFlow":
        """Load records from CSV with columns x0..,y0..,z0..,inverse_log_det."""
        x_cols = [f"x{i}" for i in range(covariate_dim)]
        y_cols = [f"y{i}" for i in range(d)]
        z_cols = [f"z{i}" for i in range(d)]
        xs, ys, zs, lds = [], [], [], []
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            needed = set(x_cols + y_cols + z_cols + ["inverse_log_det"])
            missing = needed - set(reader.fieldnames or [])
            if missing:
                raise ValueError(f"tabulated flow file missing columns: {sorted(missing)}")
            for row in reader:
                xs.append([float(row[c]) for c in x_cols])
                ys.append([float(row[c]) for c in y_cols])
                zs.append([float(row[c]) for c in z_cols])
                lds.append(float(row["inverse_log_det"]))
        return cls(np.array(xs), np.array(ys), np.array(zs), np.array(lds), latent)

    @property
    def covariate_dim(self) -> int:
        return self._covariate_width

    def forward(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError("tabulated flows are inverse-only evaluators")

    def inverse(self, y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y_arr, single = as_row_matrix(y, self.d, "y")
        x_arr = _broadcast_x(x, y_arr.shape[0], self.covariate_dim)
        zs = np.empty_like(y_arr)
        lds = np.empty(y_arr.shape[0])
        for i in range(y_arr.shape[0]):
            key = (np.ascontiguousarray(x_arr[i]).tobytes(), np.ascontiguousarray(y_arr[i]).tobytes())
            try:
                zs[i], lds[i] = self._table[key]
            except KeyError:
                raise FlowInversionError(
                    f"no tabulated record for query row {i}"
                ) from None
        if single:
            return zs[0], float(lds[0])
        return zs, lds


class SubprocessFlow(ConditionalFlow):
    """Flow evaluated by a child process over newline-delimited JSON.

    Protocol, one record per line on stdin/stdout:

        request:  {"x": [x0, ..., x_{p-1}], "y": [y0, ..., y_{d-1}]}
        response: {"z": [z0, ..., z_{d-1}], "inverse_log_det": float}

    Field order inside the JSON objects is free; the arrays are ordered.
    The worker must answer requests in order, one line each.  ``forward``
    and ``sample`` are unavailable.
    """

    def __init__(self, argv: list[str], covariate_dim: int, latent: LatentDistribution):
        self.latent = latent
        self._covariate_width = covariate_dim
        self._argv = list(argv)
        self._proc = subprocess.Popen(
            self._argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )

    @property
    def covariate_dim(self) -> int:
        return self._covariate_width

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "SubprocessFlow":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def forward(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError("subprocess flows are inverse-only evaluators")

    def inverse(self, y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y_arr, single = as_row_matrix(y, self.d, "y")
        x_arr = _broadcast_x(x, y_arr.shape[0], self.covariate_dim)
        if self._proc.poll() is not None:
            raise FlowInversionError("flow worker process has exited")
        zs = np.empty_like(y_arr)
        lds = np.empty(y_arr.shape[0])
        for i in range(y_arr.shape[0]):
            request = json.dumps({"x": x_arr[i].tolist(), "y": y_arr[i].tolist()})
            self._proc.stdin.write(request + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
            if not line:
                err = self._proc.stderr.read()
                raise FlowInversionError(f"flow worker closed its output: {err.strip()}")
            reply = json.loads(line)
            zs[i] = np.asarray(reply["z"], dtype=float)
            lds[i] = float(reply["inverse_log_det"])
        if single:
            return zs[0], float(lds[0])
        return zs, lds


class StandardizedFlow(ConditionalFlow):
    """View of a flow in standardized data coordinates.

    Wraps a flow defined on raw (x, y) so that callers can work with
    z-scored covariates and responses; the inverse log-det picks up the
    response scaling.  Statistics must come from the training split only.
    """

    def __init__(
        self,
        inner: ConditionalFlow,
        x_mean: np.ndarray,
        x_std: np.ndarray,
        y_mean: np.ndarray,
        y_std: np.ndarray,
    ):
        self.inner = inner
        self.latent = inner.latent
        self.x_mean = np.asarray(x_mean, dtype=float)
        self.x_std = np.asarray(x_std, dtype=float)
        self.y_mean = np.asarray(y_mean, dtype=float)
        self.y_std = np.asarray(y_std, dtype=float)
        if np.any(self.x_std <= 0.0) or np.any(self.y_std <= 0.0):
            raise ValueError("standardization scales must be positive")
        self._log_scale = float(np.sum(np.log(self.y_std)))

    @property
    def covariate_dim(self) -> int:
        return self.inner.covariate_dim

    def _raw_x(self, x: np.ndarray, n_rows: int) -> np.ndarray:
        x_arr = _broadcast_x(x, n_rows, self.covariate_dim)
        return x_arr * self.x_std + self.x_mean

    def forward(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        z_arr, single = as_row_matrix(z, self.d, "z")
        raw = self.inner.forward(z_arr, self._raw_x(x, z_arr.shape[0]))
        out = (np.atleast_2d(raw) - self.y_mean) / self.y_std
        return out[0] if single else out

    def inverse(self, y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y_arr, single = as_row_matrix(y, self.d, "y")
        raw_y = y_arr * self.y_std + self.y_mean
        z, log_det = self.inner.inverse(raw_y, self._raw_x(x, y_arr.shape[0]))
        log_det = np.atleast_1d(log_det) + self._log_scale
        if single:
            return np.atleast_2d(z)[0], float(log_det[0])
        return z, log_det


# --------------------------------------------------------------------------
# Synthetic ground-truth tasks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticTask:
    """A fully known conditional distribution paired with a base flow.

    The base flow may match the truth exactly (well specified) or deviate
    in a controlled, analytically tractable way, which makes miscalibration
    magnitudes computable in closed form.
    """

    name: str
    covariate_dim: int
    response_dim: int
    flow: ConditionalFlow
    true_mean_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    true_scale: np.ndarray = field(repr=False)

    def sample_covariates(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(-2.0, 2.0, size=(count, self.covariate_dim))

    def sample_responses(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x_arr = np.atleast_2d(np.asarray(x, dtype=float))
        eps = rng.standard_normal((x_arr.shape[0], self.response_dim))
        return self.true_mean_fn(x_arr) + eps @ self.true_scale.T

    def true_log_density(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        y_arr, single = as_row_matrix(y, self.response_dim, "y")
        x_arr = _broadcast_x(x, y_arr.shape[0], self.covariate_dim)
        centered = y_arr - self.true_mean_fn(x_arr)
        z = solve_triangular(self.true_scale, centered.T, lower=True).T
        out = (
            -0.5 * np.sum(z * z, axis=1)
            - 0.5 * self.response_dim * _LOG_2PI
            - np.sum(np.log(np.diag(self.true_scale)))
        )
        return float(out[0]) if single else out

    def sample_dataset(self, seed: SeedLike, count: int) -> tuple[np.ndarray, np.ndarray]:
        rng = as_generator(seed)
        x = self.sample_covariates(rng, count)
        y = self.sample_responses(x, rng)
        return x, y


# published coefficients keyed by response dimension; covariate_dim == d
_TASK_BIAS = {
    1: np.array([0.5]),
    2: np.array([0.6, -0.4]),
    3: np.array([0.2, -0.3, 0.45]),
}
_TASK_LINEAR = {
    1: np.array([[0.25]]),
    2: np.array([[0.3, -0.35], [0.55, 0.2]]),
    3: np.array([[0.3, -0.2, 0.1], [0.0, 0.4, -0.25], [0.15, 0.05, 0.35]]),
}
_TASK_SINE = {
    1: np.array([[0.8]]),
    2: np.array([[0.9, 0.0], [0.0, 0.7]]),
    3: np.array([[0.7, 0.0, 0.2], [0.0, 0.6, 0.0], [0.1, 0.0, 0.8]]),
}
_TASK_SCALE = {
    1: np.array([[0.9]]),
    2: np.array([[0.8, 0.0], [0.3, 0.6]]),
    3: np.array([[0.9, 0.0, 0.0], [0.25, 0.7, 0.0], [-0.2, 0.15, 0.55]]),
}


def _coeffs_for(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if d in _TASK_BIAS:
        return _TASK_BIAS[d], _TASK_LINEAR[d], _TASK_SINE[d], _TASK_SCALE[d]
    # deterministic extension for larger d
    bias = 0.2 * ((-1.0) ** np.arange(d))
    linear = 0.3 * np.eye(d)
    sine = 0.5 * np.eye(d)
    scale = np.tril(0.1 * np.ones((d, d)), k=-1) + np.diag(0.6 + 0.05 * np.arange(d))
    return bias, linear, sine, scale


def make_gaussian_task(
    d: int = 2,
    scale_inflation: float = 1.0,
    mean_shift: float = 0.0,
    name: Optional[str] = None,
) -> SyntheticTask:
    """Gaussian location task with an optionally misspecified base flow.

    The truth is Y | x ~ N(mean(x), S S^T).  The base flow uses the same
    mean shifted by ``mean_shift`` (per coordinate) and the scale inflated
    by ``scale_inflation`` (2.0 doubles every predictive standard
    deviation, i.e. covariance times four).
    """
    bias, linear, sine, scale = _coeffs_for(d)

    def true_mean(x_arr: np.ndarray) -> np.ndarray:
        return bias + x_arr @ linear.T + np.sin(x_arr) @ sine.T

    def model_mean(x_arr: np.ndarray) -> np.ndarray:
        return true_mean(x_arr) + mean_shift

    flow = AffineGaussianFlow(model_mean, scale_inflation * scale, covariate_dim=d)
    label = name or f"gaussian-d{d}" + (
        f"-scale{scale_inflation:g}" if scale_inflation != 1.0 else ""
    ) + (f"-shift{mean_shift:g}" if mean_shift != 0.0 else "")
    return SyntheticTask(
        name=label,
        covariate_dim=d,
        response_dim=d,
        flow=flow,
        true_mean_fn=true_mean,
        true_scale=scale,
    )


def make_univariate_cdf_task(scale_inflation: float = 1.0) -> SyntheticTask:
    """Univariate task whose base model is a Gaussian predictive CDF flow."""
    bias, linear, sine, scale = _coeffs_for(1)
    sd_true = float(scale[0, 0])

    def true_mean(x_arr: np.ndarray) -> np.ndarray:
        return bias + x_arr @ linear.T + np.sin(x_arr) @ sine.T

    flow = GaussianCdfFlow(
        mean_fn=lambda x_arr: true_mean(x_arr)[:, 0],
        sd_fn=lambda x_arr: np.full(x_arr.shape[0], scale_inflation * sd_true),
        covariate_dim=1,
    )
    label = "cdf-d1" + (f"-scale{scale_inflation:g}" if scale_inflation != 1.0 else "")
    return SyntheticTask(
        name=label,
        covariate_dim=1,
        response_dim=1,
        flow=flow,
        true_mean_fn=true_mean,
        true_scale=scale,
    )


_TASK_FACTORIES: dict[str, Callable[[], SyntheticTask]] = {
    "gaussian-d1": lambda: make_gaussian_task(1),
    "gaussian-d2": lambda: make_gaussian_task(2),
    "gaussian-d3": lambda: make_gaussian_task(3),
    "gaussian-d1-scale2": lambda: make_gaussian_task(1, scale_inflation=2.0),
    "gaussian-d2-scale2": lambda: make_gaussian_task(2, scale_inflation=2.0),
    "gaussian-d3-scale2": lambda: make_gaussian_task(3, scale_inflation=2.0),
    "gaussian-d2-shift1": lambda: make_gaussian_task(2, mean_shift=1.0),
    "cdf-d1-scale2": lambda: make_univariate_cdf_task(scale_inflation=2.0),
}

TASK_NAMES = tuple(sorted(_TASK_FACTORIES))


def get_task(name: str) -> SyntheticTask:
    try:
        factory = _TASK_FACTORIES[name]
    except KeyError:
        raise ValueError(
            f"unknown synthetic task {name!r}; available: {', '.join(TASK_NAMES)}"
        ) from None
    return factory()
