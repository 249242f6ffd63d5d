"""Sampler draws against exact posteriors on tiny datasets."""

import numpy as np
import pytest
from scipy.stats import binom, poisson

from integrated_abundance.dataset import validate_dataset, with_variant
from integrated_abundance.mcmc import McmcConfig, make_config, run
from integrated_abundance.models import CountData, ModelVariant, SurveyDesign
from integrated_abundance.simulator import ScenarioSpec, simulate

pytestmark = pytest.mark.integration

N_MAX = 80


def _counts_dataset(c):
    c = np.asarray(c)
    design = SurveyDesign.nested(c.shape[0], c.shape[0], 1, c.shape[1])
    return validate_dataset(design, None, None, CountData.from_arrays(c), ModelVariant.C)


def _site_likelihood(row, p):
    """P(counts at one site | N) for N = 0..N_MAX."""
    N = np.arange(N_MAX + 1)
    return np.prod([binom.pmf(c, N, p) for c in row], axis=0)


class TestLatentAbundance:
    """Test the N update with every scalar held fixed."""

    def test_matches_enumeration(self):
        """Test the N histogram against prior times likelihood over N."""
        counts = [[2, 1, 3]]
        lam, p = 3.0, 0.5
        config = make_config(
            chains=2, iterations=12000, burn_in=500, adapt=500, seed=21, fixed={"lambda": lam, "p": p}
        )
        output = run(_counts_dataset(counts), config)
        assert output.parameters == ()

        exact = poisson.pmf(np.arange(N_MAX + 1), lam) * _site_likelihood(counts[0], p)
        exact /= exact.sum()
        draws = output.latent_n[:, :, 0].reshape(-1)
        assert draws.min() >= 3
        observed = np.bincount(draws, minlength=N_MAX + 1)[: N_MAX + 1] / draws.size
        assert 0.5 * np.abs(observed - exact).sum() < 0.03


class TestAbundanceRate:
    """Test the lambda marginal with p fixed."""

    def test_matches_grid(self):
        """Test posterior quantiles of lambda against a fine grid."""
        counts = [[1, 2], [3, 2]]
        p = 0.6
        config = make_config(chains=3, iterations=6000, burn_in=1000, adapt=1000, seed=5, fixed={"p": p})
        output = run(_counts_dataset(counts), config)

        grid = np.linspace(1e-4, 25.0, 20001)
        N = np.arange(N_MAX + 1)
        log_post = np.zeros_like(grid)
        for row in counts:
            marginal = poisson.pmf(N[None, :], grid[:, None]) @ _site_likelihood(row, p)
            log_post += np.log(marginal)
        weights = np.exp(log_post - log_post.max())
        cdf = np.cumsum(weights) / weights.sum()
        exact = {q: grid[np.searchsorted(cdf, q)] for q in (0.1, 0.5, 0.9)}
        exact_mean = float(np.sum(grid * weights) / weights.sum())

        lam = output.pooled("lambda")
        assert lam.mean() == pytest.approx(exact_mean, abs=0.15)
        for q, value in exact.items():
            assert np.quantile(lam, q) == pytest.approx(value, abs=0.3)


@pytest.mark.slow
class TestLongRuns:
    """Enumeration oracles at full chain length."""

    def test_latent_abundance_long_run(self):
        """Test N against enumeration over 0..200 after 10^5 sweeps."""
        counts = [[4, 2, 3, 5]]
        lam, p = 4.0, 0.69
        config = make_config(
            chains=1, iterations=101000, burn_in=500, adapt=500, seed=8, fixed={"lambda": lam, "p": p}
        )
        draws = run(_counts_dataset(counts), config).latent_n[0, :, 0]

        support = np.arange(201)
        exact = poisson.pmf(support, lam) * np.prod([binom.pmf(c, support, p) for c in counts[0]], axis=0)
        exact /= exact.sum()
        observed = np.bincount(draws, minlength=201)[:201] / draws.size
        assert 0.5 * np.abs(observed - exact).sum() < 0.02

    def test_lambda_histogram(self):
        """Test the lambda posterior binned on 50 points against enumeration."""
        counts = [[1, 2], [3, 2]]
        p = 0.6
        config = make_config(chains=4, iterations=27000, burn_in=1000, adapt=1000, seed=13, fixed={"p": p})
        lam = run(_counts_dataset(counts), config).pooled("lambda")

        edges = np.linspace(0.0, 15.0, 51)
        centres = np.linspace(1e-4, 15.0, 30001)
        N = np.arange(31)
        log_post = np.zeros_like(centres)
        for row in counts:
            site = np.prod([binom.pmf(c, N, p) for c in row], axis=0)
            log_post += np.log(poisson.pmf(N[None, :], centres[:, None]) @ site)
        weights = np.exp(log_post - log_post.max())
        exact = np.histogram(centres, bins=edges, weights=weights)[0]
        exact /= exact.sum()
        observed = np.histogram(np.clip(lam, 0.0, 15.0), bins=edges)[0] / lam.size
        assert 0.5 * np.abs(observed - exact).sum() <= 0.03

    def test_median_within_grid_posterior(self):
        """Test a default-length fit against a (lambda, p) grid posterior."""
        spec = ScenarioSpec(name="counts-only", acoustic_sites=1, count_sites=50, count_surveys=5, lam=3.0, p=0.69, seed=17)
        dataset, _ = simulate(spec)
        output = run(with_variant(dataset, ModelVariant.C), McmcConfig(seed=2))
        median = float(np.median(output.pooled("lambda")))

        lam_grid = np.linspace(1.0, 6.0, 251)
        p_grid = np.linspace(0.3, 0.99, 139)
        N = np.arange(N_MAX + 1)
        pois = poisson.pmf(N[None, :], lam_grid[:, None])
        log_post = np.zeros((lam_grid.size, p_grid.size))
        for j, p in enumerate(p_grid):
            for row in dataset.counts.c:
                log_post[:, j] += np.log(pois @ _site_likelihood(row, p))
        marginal = np.exp(log_post - log_post.max()).sum(axis=1)
        cdf = np.cumsum(marginal) / marginal.sum()
        lower, upper = lam_grid[np.searchsorted(cdf, 0.025)], lam_grid[np.searchsorted(cdf, 0.975)]
        assert lower <= median <= upper
