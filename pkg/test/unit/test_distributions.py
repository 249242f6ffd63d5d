"""Unit tests for log densities."""

import numpy as np
import pytest
from scipy.special import comb

from integrated_abundance.distributions import (
    bernoulli_logit_logpmf,
    binomial_logpmf,
    hypergeom_logpmf,
    log_normalize,
    normal_logpdf,
    poisson_logpmf,
    uniform_logpdf,
)

pytestmark = pytest.mark.unit


class TestPoisson:
    """Test the Poisson log-pmf."""

    def test_known_values(self):
        """Test against hand-computed values."""
        assert poisson_logpmf(0, 1.0) == pytest.approx(-1.0, abs=1e-12)
        assert poisson_logpmf(3, 3.0) == pytest.approx(-1.4959, abs=1e-4)
        assert poisson_logpmf(7, 7.0) == pytest.approx(-1.9038, abs=1e-4)

    def test_zero_mean(self):
        """Test that a zero mean puts all mass on zero."""
        assert poisson_logpmf(0, 0.0) == 0.0
        assert poisson_logpmf(1, 0.0) == -np.inf

    def test_outside_support(self):
        """Test that negative counts are impossible, not NaN."""
        assert poisson_logpmf(-1, 2.0) == -np.inf

    def test_normalizes(self):
        """Test that the pmf sums to one."""
        total = np.exp(poisson_logpmf(np.arange(200), 12.5)).sum()
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_large_counts(self):
        """Test stability for counts in the thousands."""
        value = poisson_logpmf(5000, 5000.0)
        assert np.isfinite(value)
        # Stirling: log pmf at the mode ~ -0.5 log(2 pi mu)
        assert value == pytest.approx(-0.5 * np.log(2 * np.pi * 5000), abs=1e-3)


class TestBinomial:
    """Test the Binomial log-pmf."""

    def test_known_value(self):
        """Test C(4,2) 0.5^4."""
        assert binomial_logpmf(2, 4, 0.5) == pytest.approx(np.log(6 / 16), abs=1e-12)
        assert binomial_logpmf(2, 4, 0.5) == pytest.approx(-0.9808, abs=1e-4)

    def test_degenerate_probabilities(self):
        """Test p = 0 and p = 1."""
        assert binomial_logpmf(0, 5, 0.0) == 0.0
        assert binomial_logpmf(5, 5, 1.0) == 0.0
        assert binomial_logpmf(1, 5, 0.0) == -np.inf

    def test_outside_support(self):
        """Test x > n."""
        assert binomial_logpmf(6, 5, 0.3) == -np.inf

    def test_normalizes(self):
        """Test that the pmf sums to one."""
        total = np.exp(binomial_logpmf(np.arange(41), 40, 0.37)).sum()
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_large_trials(self):
        """Test thousands of trials."""
        assert np.isfinite(binomial_logpmf(1500, 3000, 0.5))


class TestHypergeometric:
    """Test the hypergeometric log-pmf."""

    def test_known_value(self):
        """Test drawing 2 of 7 with 4 true and 3 false: C(4,2) C(3,0) / C(7,2)."""
        assert hypergeom_logpmf(2, 4, 3, 2) == pytest.approx(np.log(6 / 21), abs=1e-12)
        assert hypergeom_logpmf(2, 4, 3, 2) == pytest.approx(-1.2528, abs=1e-4)

    def test_against_comb(self):
        """Test a grid of cells against scipy combinations."""
        for K in range(6):
            for Q in range(5):
                for n in range(K + Q + 1):
                    for k in range(max(0, n - Q), min(K, n) + 1):
                        expected = np.log(comb(K, k, exact=True) * comb(Q, n - k, exact=True) / comb(K + Q, n, exact=True))
                        assert hypergeom_logpmf(k, K, Q, n) == pytest.approx(expected, abs=1e-10)

    def test_outside_support(self):
        """Test impossible samples."""
        assert hypergeom_logpmf(3, 2, 5, 3) == -np.inf
        assert hypergeom_logpmf(0, 2, 1, 3) == -np.inf

    def test_normalizes(self):
        """Test that the pmf sums to one over k."""
        total = np.exp(hypergeom_logpmf(np.arange(0, 11), 10, 15, 10)).sum()
        assert total == pytest.approx(1.0, abs=1e-8)


class TestOtherDensities:
    """Test Bernoulli, normal and uniform densities."""

    def test_bernoulli_logit(self):
        """Test that eta = 0 is a fair coin."""
        assert bernoulli_logit_logpmf(1, 0.0) == pytest.approx(np.log(0.5))
        assert bernoulli_logit_logpmf(0, 0.0) == pytest.approx(np.log(0.5))
        assert bernoulli_logit_logpmf(2, 0.0) == -np.inf

    def test_bernoulli_extreme(self):
        """Test large logits stay finite."""
        assert np.isfinite(bernoulli_logit_logpmf(0, 800.0))

    def test_normal_variance(self):
        """Test that the normal is parameterized by variance."""
        assert normal_logpdf(0.0, 0.0, 100.0) == pytest.approx(-3.2215, abs=1e-4)

    def test_uniform(self):
        """Test the closed interval."""
        assert uniform_logpdf(1.0, 0.0, 4.0) == pytest.approx(-np.log(4.0))
        assert uniform_logpdf(4.0, 0.0, 4.0) == pytest.approx(-np.log(4.0))
        assert uniform_logpdf(4.1, 0.0, 4.0) == -np.inf

    def test_log_normalize(self):
        """Test rows sum to one and all -inf rows stay -inf."""
        out = log_normalize(np.array([[0.0, np.log(3.0)], [-np.inf, -np.inf]]), axis=1)
        np.testing.assert_allclose(np.exp(out[0]), [0.25, 0.75])
        assert np.all(out[1] == -np.inf)
