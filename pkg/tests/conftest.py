"""Shared test helpers: analytic calibration maps and oracle utilities."""

import numpy as np
import pytest

from latentcal.calibration import CalibrationMap
from latentcal.norm_laws import NormLaw


class ScaledNormLawMap(CalibrationMap):
    """Analytic calibration map: the law of c times a norm-law variable.

    With c = 1 this is the exact self-calibrated configuration (the norm
    transport is the identity at the population level); other values of c
    realize pure scale miscalibration in closed form.  Test-only: it is a
    population object, not a fitted estimator, and does not serialize.
    """

    smooth = True

    def __init__(self, law: NormLaw, c: float = 1.0):
        self.law = law
        self.c = float(c)

    @property
    def n(self) -> int:
        return 0

    def cdf(self, l):
        return self.law.cdf(np.asarray(l, dtype=float) / self.c)

    def survival(self, l):
        return np.exp(self.law.log_survival(np.asarray(l, dtype=float) / self.c))

    def quantile(self, p):
        return self.c * self.law.quantile(p)

    def quantile_from_survival(self, q):
        return self.c * self.law.quantile_from_survival(q)

    def log_pdf(self, l):
        return self.law.log_pdf(np.asarray(l, dtype=float) / self.c) - np.log(self.c)

    def to_dict(self):
        raise NotImplementedError("analytic test map does not serialize")


def energy_distance_permutation_pvalue(a, b, n_permutations=199, seed=0):
    """Two-sample energy-statistic permutation test; returns the p-value."""
    from scipy.spatial.distance import cdist

    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    pool = np.vstack([a, b])
    m, n_total = a.shape[0], a.shape[0] + b.shape[0]
    dist = cdist(pool, pool)
    row_sums = dist.sum(axis=1)
    total_sum = dist.sum()

    def statistic(idx_a):
        mask = np.zeros(n_total, dtype=bool)
        mask[idx_a] = True
        s_aa = dist[np.ix_(mask, mask)].sum()
        s_a_all = row_sums[mask].sum()
        s_ab = s_a_all - s_aa
        s_bb = total_sum - 2.0 * s_a_all + s_aa
        n_b = n_total - m
        return 2.0 * s_ab / (m * n_b) - s_aa / (m * m) - s_bb / (n_b * n_b)

    observed = statistic(np.arange(m))
    rng = np.random.default_rng(seed)
    exceed = 0
    for _ in range(n_permutations):
        idx = rng.permutation(n_total)[:m]
        if statistic(idx) >= observed:
            exceed += 1
    return (1.0 + exceed) / (1.0 + n_permutations)


@pytest.fixture(scope="session")
def chi3_norms_10k():
    """10^4 norms drawn exactly from the chi law with d = 3."""
    rng = np.random.default_rng(2024)
    return NormLaw.chi(3).quantile(rng.random(10_000))


@pytest.fixture(scope="session")
def chi3_kde_10k(chi3_norms_10k):
    """Full cross-validated Gamma-KDE fit on the 10^4 chi-3 norms.

    The cross-validation over the 100-point rate grid at this sample size
    is the single most expensive fit in the suite, so it is shared.
    """
    from latentcal.calibration import fit_gamma_kde

    return fit_gamma_kde(chi3_norms_10k)
