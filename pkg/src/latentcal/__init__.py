"""Latent-space recalibration for conditional normalizing flows.

The package turns any invertible conditional map with a standard latent
law into a recalibrated predictive distribution with an explicit density,
along with the calibration metrics and baselines needed to evaluate it.
"""

from latentcal.calibration import (
    CalibrationMap,
    EmpiricalCdfMap,
    GammaKdeMap,
    SplineMap,
    UnsupportedMapOperation,
    fit_empirical,
    fit_gamma_kde,
    fit_spline,
    load_calibration_map,
    save_calibration_map,
)
from latentcal.experiment import (
    Dataset,
    ExperimentConfig,
    ingest_csv,
    run_experiment,
    split_indices,
)
from latentcal.flows import (
    AffineGaussianFlow,
    ConditionalFlow,
    FlowInversionError,
    GaussianCdfFlow,
    LatentDistribution,
    StandardizedFlow,
    SubprocessFlow,
    SyntheticTask,
    TabulatedFlow,
    get_task,
    make_gaussian_task,
    make_univariate_cdf_task,
)
from latentcal.hdr import (
    HdrRecalibrator,
    fit_hdr_recalibrator,
    hdr_recalibrate_samples,
    hpd,
)
from latentcal.metrics import (
    MetricsReport,
    bpd,
    energy_score,
    hdr_ece,
    l_ece,
    nll_mean,
    relative_score,
    reliability_curve,
)
from latentcal.norm_laws import NormLaw
from latentcal.recalibrate import (
    RadialRecalibrator,
    fit_radial_recalibrator,
    load_radial_recalibrator,
    save_radial_recalibrator,
)

__all__ = [
    "NormLaw",
    "ConditionalFlow",
    "LatentDistribution",
    "AffineGaussianFlow",
    "GaussianCdfFlow",
    "TabulatedFlow",
    "SubprocessFlow",
    "StandardizedFlow",
    "SyntheticTask",
    "FlowInversionError",
    "make_gaussian_task",
    "make_univariate_cdf_task",
    "get_task",
    "CalibrationMap",
    "EmpiricalCdfMap",
    "GammaKdeMap",
    "SplineMap",
    "UnsupportedMapOperation",
    "fit_empirical",
    "fit_gamma_kde",
    "fit_spline",
    "save_calibration_map",
    "load_calibration_map",
    "RadialRecalibrator",
    "fit_radial_recalibrator",
    "save_radial_recalibrator",
    "load_radial_recalibrator",
    "HdrRecalibrator",
    "hpd",
    "fit_hdr_recalibrator",
    "hdr_recalibrate_samples",
    "l_ece",
    "hdr_ece",
    "energy_score",
    "nll_mean",
    "relative_score",
    "bpd",
    "reliability_curve",
    "MetricsReport",
    "Dataset",
    "ExperimentConfig",
    "ingest_csv",
    "split_indices",
    "run_experiment",
]
__version__ = "0.1.0"
