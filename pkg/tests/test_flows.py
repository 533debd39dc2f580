import json
import math
import sys
import textwrap

import numpy as np
import pytest

from latentcal.flows import (
    AffineGaussianFlow,
    FlowInversionError,
    LatentDistribution,
    SubprocessFlow,
    TabulatedFlow,
    get_task,
    make_gaussian_task,
    make_univariate_cdf_task,
)


def identity_flow(d, covariate_dim=1):
    return AffineGaussianFlow(
        mean_fn=lambda x: np.zeros((x.shape[0], d)),
        scale=np.eye(d),
        covariate_dim=covariate_dim,
    )


def mvn_log_density_oracle(y, mean, cov):
    d = len(mean)
    diff = np.asarray(y) - np.asarray(mean)
    cov = np.asarray(cov)
    return float(
        -0.5 * diff @ np.linalg.solve(cov, diff)
        - 0.5 * d * math.log(2.0 * math.pi)
        - 0.5 * math.log(np.linalg.det(cov))
    )


class TestLatentNorm:
    def test_identity_flow_euclidean(self):
        flow = identity_flow(2)
        assert flow.latent_norm(np.zeros(1), np.array([3.0, 4.0])) == pytest.approx(5.0)

    def test_affine_hand_inversion(self):
        flow = AffineGaussianFlow(
            mean_fn=lambda x: x, scale=2.0 * np.eye(2), covariate_dim=2
        )
        got = flow.latent_norm(np.array([1.0, 1.0]), np.array([3.0, 3.0]))
        assert got == pytest.approx(math.sqrt(2.0))

    def test_zero_latent(self):
        task = make_gaussian_task(3)
        x = np.array([0.3, -1.0, 0.7])
        y = task.flow.forward(np.zeros(3), x)
        assert task.flow.latent_norm(x, y) == pytest.approx(0.0, abs=1e-12)


class TestBaseLogDensity:
    def test_identity_mode(self):
        flow = identity_flow(2)
        got = flow.log_density(np.zeros(1), np.zeros(2))
        assert got == pytest.approx(math.log(1.0 / (2.0 * math.pi)), rel=1e-12)

    def test_scaled_univariate(self):
        flow = AffineGaussianFlow(
            mean_fn=lambda x: np.zeros((x.shape[0], 1)),
            scale=np.array([[2.0]]),
            covariate_dim=1,
        )
        expected = math.log(1.0 / (2.0 * math.sqrt(2.0 * math.pi)))
        assert flow.log_density(np.zeros(1), np.zeros(1)) == pytest.approx(expected, rel=1e-12)

    def test_matches_multivariate_normal_closed_form(self):
        task = make_gaussian_task(2, scale_inflation=1.0)
        flow = task.flow
        rng = np.random.default_rng(7)
        x = task.sample_covariates(rng, 40)
        y = task.sample_responses(x, rng)
        cov = task.true_scale @ task.true_scale.T
        got = flow.log_density(x, y)
        for i in range(40):
            mean = task.true_mean_fn(x[i : i + 1])[0]
            assert got[i] == pytest.approx(mvn_log_density_oracle(y[i], mean, cov), abs=1e-10)

    def test_normalizes_by_trapezoid_quadrature(self):
        task = make_gaussian_task(2)
        x = np.array([0.5, -0.25])
        mean = task.true_mean_fn(x[None, :])[0]
        grid = np.linspace(-8.0, 8.0, 401)
        g1, g2 = np.meshgrid(mean[0] + grid, mean[1] + grid, indexing="ij")
        pts = np.column_stack([g1.ravel(), g2.ravel()])
        dens = np.exp(task.flow.log_density(x, pts)).reshape(g1.shape)
        total = np.trapezoid(np.trapezoid(dens, grid, axis=1), grid, axis=0)
        assert total == pytest.approx(1.0, abs=1e-3)


class TestSampling:
    def test_identity_mean_clt(self):
        flow = identity_flow(2)
        samples = flow.sample(np.zeros(1), 100_000, seed=3)
        assert np.all(np.abs(samples.mean(axis=0)) < 0.02)

    def test_shifted_mean_clt(self):
        flow = AffineGaussianFlow(
            mean_fn=lambda x: np.full((x.shape[0], 2), 5.0),
            scale=np.eye(2),
            covariate_dim=1,
        )
        samples = flow.sample(np.zeros(1), 100_000, seed=4)
        assert np.all(np.abs(samples.mean(axis=0) - 5.0) < 0.02)

    def test_seed_determinism(self):
        flow = identity_flow(3)
        a = flow.sample(np.zeros(1), 100, seed=11)
        b = flow.sample(np.zeros(1), 100, seed=11)
        np.testing.assert_array_equal(a, b)

    def test_count_validation(self):
        with pytest.raises(ValueError):
            identity_flow(2).sample(np.zeros(1), 0, seed=0)


class TestRoundTrip:
    @pytest.mark.parametrize("task_name", ["gaussian-d1", "gaussian-d2-scale2", "gaussian-d3"])
    def test_forward_inverse_identity(self, task_name):
        task = get_task(task_name)
        rng = np.random.default_rng(0)
        x, y = task.sample_dataset(rng, 1000)
        z, _ = task.flow.inverse(y, x)
        back = task.flow.forward(z, x)
        assert np.max(np.abs(back - y) / np.maximum(1.0, np.abs(y))) <= 1e-8

    def test_cdf_flow_round_trip(self):
        task = make_univariate_cdf_task(scale_inflation=2.0)
        rng = np.random.default_rng(1)
        x, y = task.sample_dataset(rng, 1000)
        z, _ = task.flow.inverse(y, x)
        assert np.all((z >= 0.0) & (z <= 1.0))
        back = task.flow.forward(z, x)
        assert np.max(np.abs(back - y)) <= 1e-7


class TestInverseLogDet:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_finite_difference_jacobian(self, d):
        task = make_gaussian_task(d, scale_inflation=1.5)
        flow = task.flow
        rng = np.random.default_rng(5)
        x, y = task.sample_dataset(rng, 10)
        _, log_det = flow.inverse(y, x)
        h = 1e-6
        for i in range(10):
            jac = np.empty((d, d))
            for j in range(d):
                up = y[i].copy()
                dn = y[i].copy()
                up[j] += h
                dn[j] -= h
                z_up, _ = flow.inverse(up, x[i])
                z_dn, _ = flow.inverse(dn, x[i])
                jac[:, j] = (z_up - z_dn) / (2.0 * h)
            fd = math.log(abs(np.linalg.det(jac)))
            assert log_det[i] == pytest.approx(fd, rel=1e-4)

    def test_cdf_flow_log_det_is_log_pdf(self):
        task = make_univariate_cdf_task(scale_inflation=2.0)
        flow = task.flow
        x = np.array([0.4])
        y = np.array([1.3])
        _, log_det = flow.inverse(y, x)
        h = 1e-6
        z_up, _ = flow.inverse(y + h, x)
        z_dn, _ = flow.inverse(y - h, x)
        fd = (z_up[0] - z_dn[0]) / (2.0 * h)
        assert log_det == pytest.approx(math.log(fd), rel=1e-5)


class TestLatentDistribution:
    def test_uniform_ball_norm_law(self):
        lat = LatentDistribution("uniform_ball", 3)
        rng = np.random.default_rng(9)
        z = lat.sample(rng, 50_000)
        norms = np.linalg.norm(z, axis=1)
        assert np.all(norms <= 1.0)
        # norms should follow Beta(3, 1): mean 3/4
        assert norms.mean() == pytest.approx(0.75, abs=0.01)

    def test_uniform_ball_density_normalizes(self):
        lat = LatentDistribution("uniform_ball", 2)
        # area of unit disk = pi
        assert lat.log_density(np.zeros((1, 2)))[0] == pytest.approx(-math.log(math.pi))
        assert lat.log_density(np.array([[2.0, 0.0]]))[0] == -np.inf

    def test_interval_requires_d1(self):
        with pytest.raises(ValueError):
            LatentDistribution("uniform_interval", 2)


class TestConstruction:
    def test_scale_must_be_lower_triangular(self):
        with pytest.raises(ValueError):
            AffineGaussianFlow(
                mean_fn=lambda x: np.zeros((x.shape[0], 2)),
                scale=np.array([[1.0, 0.5], [0.0, 1.0]]),
                covariate_dim=1,
            )

    def test_scale_diagonal_positive(self):
        with pytest.raises(ValueError):
            AffineGaussianFlow(
                mean_fn=lambda x: np.zeros((x.shape[0], 2)),
                scale=np.array([[1.0, 0.0], [0.3, -1.0]]),
                covariate_dim=1,
            )

    def test_unknown_task(self):
        with pytest.raises(ValueError):
            get_task("no-such-task")


class TestTabulatedFlow:
    def test_lookup_and_errors(self, tmp_path):
        task = make_gaussian_task(2)
        rng = np.random.default_rng(2)
        x, y = task.sample_dataset(rng, 20)
        z, lds = task.flow.inverse(y, x)
        tab = TabulatedFlow(x, y, z, lds, task.flow.latent)
        z2, lds2 = tab.inverse(y, x)
        np.testing.assert_array_equal(z, z2)
        np.testing.assert_array_equal(lds, lds2)
        with pytest.raises(FlowInversionError):
            tab.inverse(y + 1.0, x)
        with pytest.raises(NotImplementedError):
            tab.forward(z, x)

    def test_csv_round_trip(self, tmp_path):
        task = make_gaussian_task(2)
        rng = np.random.default_rng(3)
        x, y = task.sample_dataset(rng, 5)
        z, lds = task.flow.inverse(y, x)
        path = tmp_path / "flow_records.csv"
        header = ["x0", "x1", "y0", "y1", "z0", "z1", "inverse_log_det"]
        rows = [
            ",".join(repr(float(v)) for v in [*x[i], *y[i], *z[i], lds[i]])
            for i in range(5)
        ]
        path.write_text("\n".join([",".join(header), *rows]) + "\n")
        tab = TabulatedFlow.from_csv(str(path), 2, 2, task.flow.latent)
        z2, lds2 = tab.inverse(y, x)
        np.testing.assert_allclose(z2, z, rtol=0, atol=0)
        assert tab.latent_norm(x, y) == pytest.approx(np.linalg.norm(z, axis=1))


WORKER_SOURCE = textwrap.dedent(
    """
    import json, sys
    import numpy as np

    MEAN = np.array([1.0, -2.0])
    SCALE = np.array([[2.0, 0.0], [0.5, 1.5]])
    INV = np.linalg.inv(SCALE)
    LOG_DET = -float(np.sum(np.log(np.diag(SCALE))))

    for line in sys.stdin:
        req = json.loads(line)
        y = np.asarray(req["y"], dtype=float)
        z = INV @ (y - MEAN)
        print(json.dumps({"z": z.tolist(), "inverse_log_det": LOG_DET}))
        sys.stdout.flush()
    """
)


class TestSubprocessFlow:
    def test_protocol_round_trip(self, tmp_path):
        worker = tmp_path / "worker.py"
        worker.write_text(WORKER_SOURCE)
        latent = LatentDistribution("gaussian", 2)
        reference = AffineGaussianFlow(
            mean_fn=lambda x: np.broadcast_to([1.0, -2.0], (x.shape[0], 2)),
            scale=np.array([[2.0, 0.0], [0.5, 1.5]]),
            covariate_dim=1,
        )
        rng = np.random.default_rng(6)
        x = rng.normal(size=(8, 1))
        y = rng.normal(size=(8, 2))
        with SubprocessFlow([sys.executable, str(worker)], 1, latent) as flow:
            z, lds = flow.inverse(y, x)
            dens = flow.log_density(x, y)
        z_ref, lds_ref = reference.inverse(y, x)
        np.testing.assert_allclose(z, z_ref, rtol=1e-12)
        np.testing.assert_allclose(lds, lds_ref, rtol=1e-12)
        np.testing.assert_allclose(dens, reference.log_density(x, y), rtol=1e-12)
