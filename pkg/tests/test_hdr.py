import math

import numpy as np
import pytest

from latentcal.flows import AffineGaussianFlow, make_gaussian_task
from latentcal.hdr import (
    DegenerateDensityWarning,
    HdrRecalibrator,
    fit_hdr_recalibrator,
    hdr_recalibrate_samples,
    hpd,
    hpd_from_sample_densities,
)
from latentcal.metrics import hdr_ece


def std_normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def scalar_gaussian_flow(mu=0.0, sd=1.0):
    return AffineGaussianFlow(
        mean_fn=lambda x: np.full((x.shape[0], 1), mu),
        scale=np.array([[sd]]),
        covariate_dim=1,
    )


class TestHpd:
    def test_mode_has_vanishing_pre_rank(self):
        flow = scalar_gaussian_flow()
        got = hpd(flow, np.zeros(1), np.array([0.0]), sample_count=1000, seed=0)
        assert got <= 0.02

    def test_far_tail_has_full_pre_rank(self):
        flow = scalar_gaussian_flow()
        got = hpd(flow, np.zeros(1), np.array([6.0]), sample_count=1000, seed=1)
        assert got >= 0.999

    def test_one_sigma_matches_gaussian_closed_form(self):
        # HPD(mu + sd) = 2 Phi(1) - 1, via an independent erf oracle
        expected = 2.0 * std_normal_cdf(1.0) - 1.0
        flow = scalar_gaussian_flow(mu=0.4, sd=1.3)
        for sign, seed in ((1.0, 2), (-1.0, 3)):
            got = hpd(flow, np.zeros(1), np.array([0.4 + sign * 1.3]), 1000, seed)
            assert got == pytest.approx(expected, abs=0.03)

    def test_invariant_under_monotone_density_transform(self):
        rng = np.random.default_rng(4)
        dens = rng.normal(size=500)
        obs = 0.3
        direct = hpd_from_sample_densities(dens, obs)
        cubed = hpd_from_sample_densities(3.0 * dens, 3.0 * obs)  # log f^3 = 3 log f
        assert direct == cubed

    def test_sample_count_validation(self):
        with pytest.raises(ValueError):
            hpd(scalar_gaussian_flow(), np.zeros(1), np.array([0.0]), sample_count=1)


class TestHdrRecalibrateSamples:
    def test_identity_map_is_permutation(self):
        task = make_gaussian_task(2)
        rec = HdrRecalibrator(task.flow, None, sample_budget=256)
        x = np.array([0.2, -0.7])
        out = hdr_recalibrate_samples(rec, x, seed=5)
        base = task.flow.sample(x, 256, seed=np.random.default_rng(5))
        # same seed stream: output must be a permutation of the base draws
        np.testing.assert_allclose(
            out[np.lexsort(out.T)], base[np.lexsort(base.T)], rtol=0, atol=0
        )

    def test_output_is_submultiset_of_draws(self):
        task = make_gaussian_task(2, scale_inflation=2.0)
        rng = np.random.default_rng(6)
        x_cal, y_cal = task.sample_dataset(rng, 100)
        rec = fit_hdr_recalibrator(task.flow, x_cal, y_cal, sample_budget=128, seed=7)
        x = np.array([0.1, 0.4])
        out = hdr_recalibrate_samples(rec, x, seed=8)
        base = task.flow.sample(x, 128, seed=np.random.default_rng(8))
        base_rows = {row.tobytes() for row in base}
        assert all(row.tobytes() in base_rows for row in out)

    def test_seed_determinism(self):
        task = make_gaussian_task(2, scale_inflation=2.0)
        rng = np.random.default_rng(9)
        x_cal, y_cal = task.sample_dataset(rng, 60)
        rec = fit_hdr_recalibrator(task.flow, x_cal, y_cal, sample_budget=64, seed=10)
        x = np.zeros(2)
        np.testing.assert_array_equal(
            hdr_recalibrate_samples(rec, x, seed=11),
            hdr_recalibrate_samples(rec, x, seed=11),
        )

    def test_degenerate_densities_warn_and_pass_through(self):
        class FlatModel:
            def sample(self, x, count, seed):
                rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
                return rng.random((count, 1))

            def log_density(self, x, y):
                return np.zeros(np.atleast_2d(y).shape[0])

        rec = HdrRecalibrator(FlatModel(), np.linspace(0.1, 0.9, 9), sample_budget=32)
        with pytest.warns(DegenerateDensityWarning):
            out = hdr_recalibrate_samples(rec, np.zeros(1), seed=12)
        assert out.shape == (32, 1)

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            HdrRecalibrator(scalar_gaussian_flow(), None, sample_budget=1)


def _hdr_pre_ranks_with_base_density(flow, cloud_fn, x_test, y_test, seed):
    """Pre-ranks of observations against per-point sample clouds, ranked
    by the base model's density (the convention for density-free methods)."""
    root = np.random.SeedSequence(seed)
    out = np.empty(x_test.shape[0])
    for i, stream in enumerate(root.spawn(x_test.shape[0])):
        cloud = cloud_fn(x_test[i], stream)
        cloud_dens = flow.log_density(x_test[i], cloud)
        obs_dens = float(np.atleast_1d(flow.log_density(x_test[i], y_test[i]))[0])
        out[i] = np.mean(cloud_dens >= obs_dens)
    return out


def _ks_to_uniform(vals):
    s = np.sort(vals)
    grid = np.arange(1, s.size + 1) / s.size
    return float(np.max(np.abs(s - grid)))


class TestRecalibrationImprovesHdrCalibration:
    def test_pre_ranks_closer_to_uniform_after_recalibration(self):
        task = make_gaussian_task(2, scale_inflation=2.0)
        budget = 400
        ece_before, ece_after = [], []
        ks_before, ks_after = [], []
        for seed in range(10):
            rng = np.random.default_rng(1000 + seed)
            x_cal, y_cal = task.sample_dataset(rng, 150)
            x_test, y_test = task.sample_dataset(rng, 120)
            rec = fit_hdr_recalibrator(task.flow, x_cal, y_cal, budget, seed=seed)

            base_ranks = _hdr_pre_ranks_with_base_density(
                task.flow,
                lambda x, stream: task.flow.sample(x, budget, np.random.default_rng(stream)),
                x_test,
                y_test,
                seed=2000 + seed,
            )
            recal_ranks = _hdr_pre_ranks_with_base_density(
                task.flow,
                lambda x, stream: hdr_recalibrate_samples(rec, x, np.random.default_rng(stream)),
                x_test,
                y_test,
                seed=2000 + seed,
            )
            ece_before.append(hdr_ece(base_ranks))
            ece_after.append(hdr_ece(recal_ranks))
            ks_before.append(_ks_to_uniform(base_ranks))
            ks_after.append(_ks_to_uniform(recal_ranks))
        assert np.mean(ece_after) < np.mean(ece_before)
        assert np.mean(ks_after) < np.mean(ks_before)
