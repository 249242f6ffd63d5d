"""Log-likelihood and log-prior kernels for every model component.

The per-cell / per-site ``*_terms`` functions return arrays so the sampler
can update sites locally; the ``loglik_*`` functions are their sums. All
values are natural-log densities: -inf marks a violated support constraint
and NaN never escapes.
"""

import logging
from typing import Dict, Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.stats import truncnorm

from .distributions import (
    bernoulli_logit_logpmf,
    binomial_logpmf,
    hypergeom_logpmf,
    normal_logpdf,
    poisson_logpmf,
    uniform_logpdf,
)
from .models import (
    ALPHA0,
    ALPHA1,
    BETA0,
    BETA1,
    DELTA,
    LAMBDA,
    OMEGA,
    P,
    AbundanceModel,
    Dataset,
    ModelVariant,
    ParameterState,
    scalar_parameters,
)
from .rates import true_positive_rate

logger = logging.getLogger(__name__)

LogDensity = float

ABUNDANCE = "abundance"
ACOUSTIC_BINARY = "acoustic_binary"
VOCALIZATIONS = "vocalizations"
VALIDATION = "validation"
COUNTS = "counts"

# Likelihood components that involve each scalar parameter
PARAMETER_COMPONENTS: Dict[str, tuple] = {
    LAMBDA: (ABUNDANCE,),
    BETA0: (ABUNDANCE,),
    BETA1: (ABUNDANCE,),
    ALPHA0: (ACOUSTIC_BINARY,),
    ALPHA1: (ACOUSTIC_BINARY,),
    DELTA: (VOCALIZATIONS, VALIDATION),
    OMEGA: (VOCALIZATIONS, VALIDATION),
    P: (COUNTS,),
}

K_SAMPLE = "sample"
K_MARGINALIZE = "marginalize"


# Priors


class UniformPrior(BaseModel):
    """Uniform prior on [lower, upper]."""

    lower: float = 0.0
    upper: float = 1000.0

    @model_validator(mode="after")
    def _ordered(self):
        if not self.upper > self.lower:
            raise ValueError("uniform prior needs upper > lower")
        return self

    def logpdf(self, x: float) -> float:
        return uniform_logpdf(x, self.lower, self.upper)

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lower, self.upper))


class NormalPrior(BaseModel):
    """Normal prior given by mean and variance, optionally truncated."""

    mean: float = 0.0
    variance: float = Field(100.0, gt=0)
    lower: Optional[float] = None
    upper: Optional[float] = None

    def logpdf(self, x: float) -> float:
        if (self.lower is not None and x < self.lower) or (self.upper is not None and x > self.upper):
            return -np.inf
        return normal_logpdf(x, self.mean, self.variance)

    def sample(self, rng: np.random.Generator) -> float:
        sd = float(np.sqrt(self.variance))
        a = -np.inf if self.lower is None else (self.lower - self.mean) / sd
        b = np.inf if self.upper is None else (self.upper - self.mean) / sd
        return float(truncnorm.rvs(a, b, loc=self.mean, scale=sd, random_state=rng))


class PriorConfig(BaseModel):
    """Priors for every scalar parameter (wide defaults: U(0, 1000) rates, N(0, 100) coefficients)."""

    lam: UniformPrior = UniformPrior()
    delta: UniformPrior = UniformPrior()
    omega: UniformPrior = UniformPrior()
    alpha1: UniformPrior = UniformPrior()
    p: UniformPrior = UniformPrior(lower=0.0, upper=1.0)
    alpha0: NormalPrior = NormalPrior()
    beta0: NormalPrior = NormalPrior()
    beta1: NormalPrior = NormalPrior()

    def for_parameter(self, name: str):
        return self.lam if name == LAMBDA else getattr(self, name)

    @classmethod
    def truncated(cls) -> "PriorConfig":
        """Moderate ranges used for starting values and calibration truths."""
        return cls(
            lam=UniformPrior(lower=0.0, upper=20.0),
            delta=UniformPrior(lower=0.0, upper=20.0),
            omega=UniformPrior(lower=0.0, upper=20.0),
            alpha1=UniformPrior(lower=0.0, upper=5.0),
            p=UniformPrior(lower=0.05, upper=0.95),
            alpha0=NormalPrior(lower=-5.0, upper=0.0),
            beta0=NormalPrior(lower=-1.0, upper=3.0),
            beta1=NormalPrior(lower=-1.0, upper=1.0),
        )


DEFAULT_PRIORS = PriorConfig()


# Per-cell and per-site terms


def abundance_terms(N: np.ndarray, abundance: AbundanceModel) -> np.ndarray:
    """Poisson log-pmf of N_i at lambda_i for every global site."""
    N = np.asarray(N)
    lam = abundance.expected(len(N))
    bad = ~np.isfinite(lam)
    if bad.any():
        logger.warning(f"[Likelihood] non-finite expected abundance at {int(bad.sum())} site(s)")
    return np.where(bad, -np.inf, poisson_logpmf(N, np.where(bad, 0.0, lam)))


def acoustic_binary_terms(y, N, alpha0: float, alpha1: float, mask) -> np.ndarray:
    """Bernoulli log-pmf of y_ij with pi_i = inverse-logit(alpha0 + alpha1 N_i); N over acoustic sites."""
    eta = alpha0 + alpha1 * np.asarray(N, dtype=np.float64)[:, None]
    terms = bernoulli_logit_logpmf(y, np.broadcast_to(eta, np.shape(y)))
    return np.where(mask, 0.0, terms)


def vocalization_terms(v, y, N, delta: float, omega: float, mask) -> np.ndarray:
    """Poisson log-pmf of v_ij at mean (delta N_i + omega) y_ij."""
    mean = (delta * np.asarray(N, dtype=np.float64) + omega)[:, None] * np.asarray(y)
    return np.where(mask, 0.0, poisson_logpmf(v, mean))


def validation_terms(k, n, K, v, N, delta: float, omega: float, mask) -> np.ndarray:
    """
    Binomial(K; v, tp_i) + Hypergeometric(k; K, v - K, n) per validated cell.

    Validated cells are unmasked cells with n > 0; the others contribute 0,
    which is the Binomial term with K summed out.
    """
    tp = np.asarray(true_positive_rate(np.asarray(N), delta, omega), dtype=np.float64)[:, None]
    K = np.asarray(K)
    v = np.asarray(v)
    active = ~np.asarray(mask) & (np.asarray(n) > 0)
    terms = binomial_logpmf(K, v, tp) + hypergeom_logpmf(k, K, v - K, n)
    return np.where(active, terms, 0.0)


def marginal_validation_terms(k, n, N, delta: float, omega: float, mask) -> np.ndarray:
    """Validation block with K summed out: Binomial(k; n, tp_i) per validated cell."""
    tp = np.asarray(true_positive_rate(np.asarray(N), delta, omega), dtype=np.float64)[:, None]
    active = ~np.asarray(mask) & (np.asarray(n) > 0)
    return np.where(active, binomial_logpmf(k, n, tp), 0.0)


def count_terms(c, N, p: float, site_map, mask) -> np.ndarray:
    """Binomial log-pmf of c_it with N at the mapped global site as trials."""
    trials = np.asarray(N)[np.asarray(site_map, dtype=np.int64)][:, None]
    return np.where(mask, 0.0, binomial_logpmf(c, trials, p))


# Summed log-likelihoods


def loglik_abundance(N, abundance: AbundanceModel) -> LogDensity:
    return float(np.sum(abundance_terms(N, abundance)))


def loglik_acoustic_binary(y, N, alpha0: float, alpha1: float, mask) -> LogDensity:
    return float(np.sum(acoustic_binary_terms(y, N, alpha0, alpha1, mask)))


def loglik_vocalizations(v, y, N, delta: float, omega: float, mask) -> LogDensity:
    return float(np.sum(vocalization_terms(v, y, N, delta, omega, mask)))


def loglik_validation(k, n, K, v, N, delta: float, omega: float, mask) -> LogDensity:
    return float(np.sum(validation_terms(k, n, K, v, N, delta, omega, mask)))


def loglik_counts(c, N, p: float, site_map, mask) -> LogDensity:
    return float(np.sum(count_terms(c, N, p, site_map, mask)))


def logprior(
    state: ParameterState,
    priors: PriorConfig = DEFAULT_PRIORS,
    parameters: Optional[Iterable[str]] = None,
) -> LogDensity:
    """
    Sum of log prior densities.

    Args:
        state: Parameter state
        priors: Prior configuration
        parameters: Parameters to include (default: every parameter of the
            state's abundance kind)

    Returns:
        Log prior density, -inf outside any bound
    """
    if parameters is None:
        parameters = scalar_parameters(ModelVariant.ACV, state.abundance.kind)
    total = 0.0
    for name in parameters:
        total += priors.for_parameter(name).logpdf(state.value(name))
    return float(total)


def _active_components(variant: ModelVariant) -> tuple:
    components = [ABUNDANCE]
    if variant.uses_acoustic:
        components += [ACOUSTIC_BINARY, VOCALIZATIONS]
    if variant.uses_validation:
        components.append(VALIDATION)
    if variant.uses_counts:
        components.append(COUNTS)
    return tuple(components)


def component_logliks(
    state: ParameterState,
    dataset: Dataset,
    variant: Optional[ModelVariant] = None,
    components: Optional[Sequence[str]] = None,
    k_strategy: str = K_SAMPLE,
) -> Dict[str, LogDensity]:
    """
    Log-likelihood of each requested component that is active for the variant.

    Args:
        state: Parameter state
        dataset: Validated dataset
        variant: Variant (defaults to the dataset's)
        components: Restrict to these components
        k_strategy: "sample" (explicit K) or "marginalize" (K summed out)

    Returns:
        Dict of component name -> log density
    """
    variant = dataset.variant if variant is None else ModelVariant.parse(variant)
    active = _active_components(variant)
    wanted = active if components is None else [c for c in components if c in active]
    design = dataset.design
    N = np.asarray(state.N)
    out: Dict[str, LogDensity] = {}

    if ABUNDANCE in wanted:
        out[ABUNDANCE] = loglik_abundance(N, state.abundance)

    if dataset.acoustic is not None:
        acoustic = dataset.acoustic
        Na = N[design.acoustic_index]
        if ACOUSTIC_BINARY in wanted:
            out[ACOUSTIC_BINARY] = loglik_acoustic_binary(
                acoustic.y, Na, state.alpha0, state.alpha1, acoustic.missing_mask
            )
        if VOCALIZATIONS in wanted:
            out[VOCALIZATIONS] = loglik_vocalizations(
                acoustic.v, acoustic.y, Na, state.delta, state.omega, acoustic.missing_mask
            )
        if VALIDATION in wanted:
            validation = dataset.validation
            if k_strategy == K_MARGINALIZE:
                out[VALIDATION] = float(np.sum(marginal_validation_terms(
                    validation.k, validation.n, Na, state.delta, state.omega, acoustic.missing_mask
                )))
            else:
                out[VALIDATION] = loglik_validation(
                    validation.k, validation.n, state.K, acoustic.v, Na,
                    state.delta, state.omega, acoustic.missing_mask,
                )

    if COUNTS in wanted:
        counts = dataset.counts
        out[COUNTS] = loglik_counts(counts.c, N, state.p, design.count_index, counts.missing_mask)

    return out


def joint_loglik(
    state: ParameterState,
    dataset: Dataset,
    variant: Optional[ModelVariant] = None,
    k_strategy: str = K_SAMPLE,
) -> LogDensity:
    """
    Joint log-likelihood: the product of the variant's component likelihoods.

    AV = abundance + acoustic binary + vocalizations + validation;
    C = abundance + counts; AC = AV without validation + counts; ACV = all.
    """
    return float(sum(component_logliks(state, dataset, variant, k_strategy=k_strategy).values()))


def log_posterior(
    state: ParameterState,
    dataset: Dataset,
    variant: Optional[ModelVariant] = None,
    priors: PriorConfig = DEFAULT_PRIORS,
    k_strategy: str = K_SAMPLE,
) -> LogDensity:
    """Unnormalized log posterior over the variant's sampled parameters."""
    variant = dataset.variant if variant is None else ModelVariant.parse(variant)
    lp = logprior(state, priors, scalar_parameters(variant, state.abundance.kind))
    if lp == -np.inf:
        return -np.inf
    return lp + joint_loglik(state, dataset, variant, k_strategy)


def site_loglik(
    state: ParameterState,
    dataset: Dataset,
    variant: Optional[ModelVariant] = None,
    N: Optional[np.ndarray] = None,
    k_strategy: str = K_SAMPLE,
) -> np.ndarray:
    """
    Every log-likelihood term involving N_i, collected per global site.

    Args:
        state: Parameter state (scalars and K are read from it)
        dataset: Validated dataset
        variant: Variant (defaults to the dataset's)
        N: Abundance vector to evaluate instead of state.N; negative entries
            evaluate to -inf
        k_strategy: "sample" or "marginalize"

    Returns:
        Array of length G
    """
    variant = dataset.variant if variant is None else ModelVariant.parse(variant)
    design = dataset.design
    N = np.asarray(state.N if N is None else N, dtype=np.int64)
    negative = N < 0
    N = np.where(negative, 0, N)

    out = np.array(abundance_terms(N, state.abundance), dtype=np.float64)

    if variant.uses_acoustic:
        acoustic = dataset.acoustic
        aidx = design.acoustic_index
        Na = N[aidx]
        mask = acoustic.missing_mask
        rows = acoustic_binary_terms(acoustic.y, Na, state.alpha0, state.alpha1, mask).sum(axis=1)
        rows = rows + vocalization_terms(acoustic.v, acoustic.y, Na, state.delta, state.omega, mask).sum(axis=1)
        if variant.uses_validation:
            validation = dataset.validation
            if k_strategy == K_MARGINALIZE:
                rows = rows + marginal_validation_terms(
                    validation.k, validation.n, Na, state.delta, state.omega, mask
                ).sum(axis=1)
            else:
                rows = rows + validation_terms(
                    validation.k, validation.n, state.K, acoustic.v, Na, state.delta, state.omega, mask
                ).sum(axis=1)
        out[aidx] += rows

    if variant.uses_counts:
        counts = dataset.counts
        cidx = design.count_index
        out[cidx] += count_terms(counts.c, N, state.p, cidx, counts.missing_mask).sum(axis=1)

    return np.where(negative, -np.inf, out)
