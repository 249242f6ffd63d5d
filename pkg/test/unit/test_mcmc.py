"""Unit tests for the sampler's building blocks and short runs."""

import numpy as np
import pytest
from scipy.stats import binom, hypergeom

from integrated_abundance.dataset import validate_dataset, with_variant
from integrated_abundance.exceptions import ConfigurationError, DatasetError
from integrated_abundance.likelihoods import PriorConfig
from integrated_abundance.mcmc import (
    McmcConfig,
    from_unconstrained,
    initialize,
    k_full_conditional,
    log_jacobian,
    make_config,
    n_log_ratio,
    run,
    scalar_log_ratio,
    to_unconstrained,
    update_k,
    update_n,
)
from integrated_abundance.models import AbundanceKind, CountData, ModelVariant, SurveyDesign
from integrated_abundance.rates import true_positive_rate
from integrated_abundance.simulator import simulate

pytestmark = pytest.mark.unit


def _enumerated(k: int, n: int, v: int, tp: float):
    support = np.arange(k, v - (n - k) + 1)
    weights = binom.pmf(support, v, tp) * hypergeom.pmf(k, v, support, n)
    return support, weights / weights.sum()


class TestConfig:
    """Test sampler settings."""

    def test_defaults(self):
        """Test that the default schedule is valid."""
        config = McmcConfig()
        assert config.retained_per_chain == 2000

    def test_full_schedule(self):
        """Test the long schedule keeps 1000 draws per chain."""
        config = McmcConfig.full()
        assert config.retained_per_chain == 1000
        assert config.chains * config.retained_per_chain == 3000

    def test_zero_iterations(self):
        """Test that iterations must be positive."""
        with pytest.raises(ConfigurationError, match="iterations"):
            make_config(iterations=0, burn_in=0, adapt=0)

    def test_schedule_too_long(self):
        """Test that adaptation and burn-in must leave retained iterations."""
        with pytest.raises(ConfigurationError, match="burn_in \\+ adapt must be < iterations"):
            make_config(iterations=100, burn_in=50, adapt=50)

    def test_unknown_field(self):
        """Test that misspelled settings are rejected."""
        with pytest.raises(ConfigurationError):
            make_config(iteration=100)

    def test_digest_ignores_workers(self):
        """Test that the worker count does not change the config digest."""
        assert McmcConfig(workers=1).digest() == McmcConfig(workers=4).digest()
        assert McmcConfig(seed=1).digest() != McmcConfig(seed=2).digest()


class TestTransforms:
    """Test transformed scales and their Jacobians."""

    @pytest.mark.parametrize("name,value", [("lambda", 2.5), ("delta", 0.1), ("p", 0.3), ("alpha0", -1.7)])
    def test_round_trip(self, name, value):
        """Test that the transform inverts."""
        assert from_unconstrained(name, to_unconstrained(name, value)) == pytest.approx(value, rel=1e-12)

    def test_log_jacobian(self):
        """Test |dx/dz| for log, logit and identity scales."""
        z = to_unconstrained("lambda", 2.5)
        assert log_jacobian("lambda", z) == pytest.approx(np.log(2.5))
        z = to_unconstrained("p", 0.3)
        assert log_jacobian("p", z) == pytest.approx(np.log(0.3 * 0.7))
        assert log_jacobian("alpha0", -1.7) == 0.0


class TestKFullConditional:
    """Test the exact draw of true calls."""

    def test_worked_cell(self):
        """Test k = 2, n = 2, v = 7 and tp = 4/7 against enumeration."""
        support, probs = k_full_conditional(2, 2, 7, 4 / 7)
        expected_support, expected = _enumerated(2, 2, 7, 4 / 7)
        np.testing.assert_array_equal(support, expected_support)
        np.testing.assert_allclose(probs, expected, atol=1e-10)

    def test_random_cells(self):
        """Test many random cells against enumeration."""
        rng = np.random.default_rng(123)
        for _ in range(1000):
            v = int(rng.integers(1, 13))
            n = int(rng.integers(0, v + 1))
            k = int(rng.integers(0, n + 1))
            tp = float(rng.uniform(0.01, 0.99))
            support, probs = k_full_conditional(k, n, v, tp)
            expected_support, expected = _enumerated(k, n, v, tp)
            np.testing.assert_array_equal(support, expected_support)
            np.testing.assert_allclose(probs, expected, atol=1e-10)

    def test_census(self):
        """Test that checking every call pins K to k."""
        support, probs = k_full_conditional(3, 7, 7, 0.4)
        assert support.tolist() == [3]
        assert probs.tolist() == [1.0]

    def test_unchecked(self):
        """Test that n = 0 leaves the Binomial(v, tp) prior."""
        support, probs = k_full_conditional(0, 0, 6, 0.35)
        np.testing.assert_allclose(probs, binom.pmf(np.arange(7), 6, 0.35), atol=1e-12)

    def test_empty_support(self):
        """Test that n > v has no support."""
        with pytest.raises(DatasetError, match="empty support"):
            k_full_conditional(1, 5, 3, 0.5)


class TestScalarRatio:
    """Test the Metropolis ratio for scalar parameters."""

    @pytest.mark.parametrize("name,value", [("lambda", 2.4), ("p", 0.45), ("alpha0", -0.6), ("omega", 2.2)])
    def test_reverse_move(self, dataset, state, name, value):
        """Test that the reverse move has exactly the negative ratio."""
        priors = PriorConfig()
        proposed = state.with_values(**{name: value})
        forward = scalar_log_ratio(state, proposed, name, dataset, ModelVariant.ACV, priors)
        backward = scalar_log_ratio(proposed, state, name, dataset, ModelVariant.ACV, priors)
        assert np.isfinite(forward)
        assert forward + backward == pytest.approx(0.0, abs=1e-12)

    def test_outside_prior(self, dataset, state):
        """Test that a proposal outside the prior is rejected outright."""
        proposed = state.with_values(p=1.5)
        assert scalar_log_ratio(state, proposed, "p", dataset, ModelVariant.ACV, PriorConfig()) == -np.inf


class TestUpdateN:
    """Test the abundance update."""

    def test_negative_proposal(self, dataset, state):
        """Test that N < 0 is never accepted."""
        ratio = n_log_ratio(state, np.array([-1, -2, -1]), dataset, ModelVariant.ACV)
        assert np.all(ratio == -np.inf)

    def test_below_observed_count(self, dataset, state):
        """Test that N below the largest count is never accepted."""
        ratio = n_log_ratio(state, np.array([1, 2, 1]), dataset, ModelVariant.ACV)
        assert ratio[0] == -np.inf and ratio[1] == -np.inf
        assert ratio[2] == 0.0

    def test_update_keeps_support(self, dataset, state):
        """Test that repeated updates stay feasible."""
        rng = np.random.default_rng(8)
        widths = np.full(3, 3)
        for _ in range(200):
            state, accepted = update_n(state, dataset, ModelVariant.ACV, rng, widths)
            assert accepted.shape == (3,)
            assert state.N[0] >= 2 and state.N[1] >= 3 and state.N[2] >= 0


class TestUpdateK:
    """Test the true-call update."""

    def test_draws_within_support(self, dataset, state):
        """Test k <= K <= v - (n - k) for every cell."""
        rng = np.random.default_rng(4)
        k, n, v = dataset.validation.k, dataset.validation.n, dataset.acoustic.v
        for _ in range(100):
            state = update_k(state, dataset, rng)
            assert np.all(state.K >= k)
            assert np.all(state.K <= v - (n - k))

    def test_frequencies(self, dataset, state):
        """Test that draws of one cell follow its full conditional."""
        rng = np.random.default_rng(17)
        draws = np.array([update_k(state, dataset, rng).K[1, 1] for _ in range(20000)])
        tp = true_positive_rate(state.N[1], state.delta, state.omega)
        support, probs = k_full_conditional(2, 2, 8, tp)
        observed = np.array([np.mean(draws == s) for s in support])
        np.testing.assert_allclose(observed, probs, atol=0.015)


class TestInitialize:
    """Test starting states."""

    def test_starting_abundance(self, dataset):
        """Test N starts at the largest count or one plus the largest detection."""
        state = initialize(dataset, np.random.default_rng(0))
        assert state.N.tolist() == [2, 3, 1]

    def test_starting_true_calls(self, dataset):
        """Test K starts at k plus half the unchecked calls."""
        state = initialize(dataset, np.random.default_rng(0))
        np.testing.assert_array_equal(state.K, [[2, 0], [2, 5], [0, 0]])

    def test_no_k_without_validation(self, dataset):
        """Test that AC carries no latent true calls."""
        state = initialize(with_variant(dataset, ModelVariant.AC), np.random.default_rng(0))
        assert state.K is None
        assert state.p > 0.0

    def test_all_zero_counts(self):
        """Test that all-zero data still starts."""
        design = SurveyDesign.nested(3, 3, 1, 2)
        dataset = validate_dataset(design, None, None, CountData.from_arrays(np.zeros((3, 2))), ModelVariant.C)
        state = initialize(dataset, np.random.default_rng(0))
        assert state.N.tolist() == [0, 0, 0]

    def test_fixed_values(self, dataset):
        """Test that fixed parameters are used as given."""
        config = make_config(iterations=10, burn_in=0, adapt=0, fixed={"p": 0.69})
        state = initialize(dataset, np.random.default_rng(0), config)
        assert state.p == 0.69

    def test_truncated_starting_priors(self, dataset):
        """Test that random starts come from the truncated ranges."""
        rng = np.random.default_rng(2)
        for _ in range(20):
            state = initialize(dataset, rng)
            assert 0.05 <= state.p <= 0.95
            assert -5.0 <= state.alpha0 <= 0.0
            assert 0.0 <= state.value("lambda") <= 20.0


class TestRun:
    """Test short sampler runs."""

    @pytest.fixture
    def config(self):
        return make_config(chains=2, iterations=60, burn_in=10, adapt=20, thin=2, seed=5)

    def test_shapes(self, small_spec, config):
        """Test the retained draw count and output layout."""
        dataset, _ = simulate(small_spec)
        output = run(dataset, config, variant=ModelVariant.AC)
        assert output.parameters == ("lambda", "alpha0", "alpha1", "delta", "omega", "p")
        assert output.draws["lambda"].shape == (2, 15)
        assert output.latent_n.shape == (2, 15, 6)
        assert output.metadata["retained_draws"] == 30
        assert output.pooled("N[0]").shape == (30,)

    def test_deterministic(self, small_spec, config):
        """Test that the same settings give identical draws."""
        dataset, _ = simulate(small_spec)
        first = run(dataset, config)
        second = run(dataset, config)
        for name in first.parameters:
            np.testing.assert_array_equal(first.draws[name], second.draws[name])
        np.testing.assert_array_equal(first.latent_n, second.latent_n)
        assert first.config_hash == second.config_hash

    def test_chains_differ(self, small_spec, config):
        """Test that chains use different streams."""
        dataset, _ = simulate(small_spec)
        output = run(dataset, config, variant=ModelVariant.C)
        assert not np.array_equal(output.draws["lambda"][0], output.draws["lambda"][1])

    def test_fixed_parameter(self, small_spec, config):
        """Test that a fixed parameter is not sampled."""
        dataset, _ = simulate(small_spec)
        output = run(dataset, config.model_copy(update={"fixed": {"p": 0.69}}), variant=ModelVariant.C)
        assert output.parameters == ("lambda",)

    def test_fixed_unknown_parameter(self, small_spec, config):
        """Test fixing a parameter the variant does not sample."""
        dataset, _ = simulate(small_spec)
        with pytest.raises(ConfigurationError, match="not sampled by variant C"):
            run(dataset, config.model_copy(update={"fixed": {"delta": 4.0}}), variant=ModelVariant.C)

    def test_marginalized_k(self, small_spec, config):
        """Test the variant that sums K out."""
        dataset, _ = simulate(small_spec)
        output = run(dataset, config.model_copy(update={"k_strategy": "marginalize"}))
        assert output.metadata["k_strategy"] == "marginalize"
        assert np.all(np.isfinite(output.log_density))

    def test_log_linear_needs_covariate(self, small_spec, config):
        """Test that log-linear abundance needs a covariate."""
        dataset, _ = simulate(small_spec)
        with pytest.raises(ConfigurationError, match="no covariate"):
            run(dataset, config.model_copy(update={"abundance_kind": AbundanceKind.LOG_LINEAR}))
