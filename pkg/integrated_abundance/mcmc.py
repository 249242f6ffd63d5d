"""Multi-chain Metropolis-within-Gibbs sampler for the integrated abundance models.

Each sweep updates, in order: latent abundance N (random-walk Metropolis per
site), latent true calls K (exact draw from the full conditional, validation
variants only) and every scalar parameter (random-walk Metropolis on a
transformed scale). Proposal scales adapt toward the target acceptance rate
during the first ``adapt`` iterations and are frozen afterwards; burn-in
follows adaptation, and only iterations after both are retained.
"""

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.special import expit, log_expit, logit

from .dataset import with_variant
from .distributions import binomial_logpmf, hypergeom_logpmf, log_normalize
from .events import ProgressEvent, ProgressManager
from .exceptions import ConfigurationError, DatasetError, InitializationError
from .likelihoods import (
    K_MARGINALIZE,
    K_SAMPLE,
    PARAMETER_COMPONENTS,
    PriorConfig,
    component_logliks,
    log_posterior,
    site_loglik,
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
    AbundanceKind,
    AbundanceModel,
    Dataset,
    ModelVariant,
    ParameterState,
    scalar_parameters,
)
from .rates import true_positive_rate
from .rng import SEED_LIMIT, Stream, stream

logger = logging.getLogger(__name__)

MAX_INIT_ATTEMPTS = 1000
INITIAL_STEP = 0.5
MAX_N_WIDTH = 1000
ADAPTATION_DECAY = 0.6

LOG_SCALE = (DELTA, OMEGA, LAMBDA, ALPHA1)
LOGIT_SCALE = (P,)


class McmcConfig(BaseModel):
    """Sampler settings."""

    model_config = ConfigDict(extra="forbid")

    chains: int = Field(3, ge=1)
    iterations: int = Field(4000, ge=1)
    burn_in: int = Field(1000, ge=0)
    adapt: int = Field(1000, ge=0)
    thin: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    target_accept: float = Field(0.44, gt=0.0, lt=1.0)
    n_proposal_width: int = Field(3, ge=1)
    abundance_kind: Optional[AbundanceKind] = None
    k_strategy: Literal["sample", "marginalize"] = K_SAMPLE
    priors: PriorConfig = Field(default_factory=PriorConfig)
    fixed: Dict[str, float] = Field(default_factory=dict)
    workers: int = Field(1, ge=1)
    progress_every: int = Field(100, ge=1)

    @model_validator(mode="after")
    def _schedule_fits(self):
        if self.burn_in + self.adapt >= self.iterations:
            raise ValueError("burn_in + adapt must be < iterations")
        return self

    @classmethod
    def full(cls, **overrides) -> "McmcConfig":
        """Three chains of 10,000 iterations, 3,000 burn-in, 5,000 adaptive, thinning 2."""
        values = dict(chains=3, iterations=10000, burn_in=3000, adapt=5000, thin=2)
        values.update(overrides)
        return make_config(**values)

    @classmethod
    def desk(cls, **overrides) -> "McmcConfig":
        """Shortened chains for desk-scale studies."""
        values = dict(chains=3, iterations=4000, burn_in=1000, adapt=1000, thin=1)
        values.update(overrides)
        return make_config(**values)

    @property
    def retained_per_chain(self) -> int:
        return (self.iterations - self.burn_in - self.adapt) // self.thin

    def digest(self) -> str:
        """SHA-256 of the settings that influence the draws."""
        payload = self.model_dump_json(exclude={"workers", "progress_every"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def make_config(**values) -> McmcConfig:
    """
    Build an McmcConfig, reporting invalid fields as ConfigurationError.

    Raises:
        ConfigurationError: If any field is invalid
    """
    try:
        return McmcConfig(**values)
    except ValidationError as e:
        raise ConfigurationError.from_validation(e, "sampler settings") from None


@dataclass(frozen=True, eq=False)
class ChainOutput:
    """Retained draws of every chain."""

    variant: ModelVariant
    parameters: Tuple[str, ...]  # sampled scalars, in update order
    draws: Dict[str, np.ndarray]  # name -> (chains, draws)
    latent_n: np.ndarray  # (chains, draws, G)
    log_density: np.ndarray  # (chains, draws)
    acceptance_rates: Dict[str, float]
    config_hash: str
    seed: int
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def num_chains(self) -> int:
        return int(self.log_density.shape[0])

    @property
    def draws_per_chain(self) -> int:
        return int(self.log_density.shape[1])

    @property
    def num_draws(self) -> int:
        return self.num_chains * self.draws_per_chain

    def chain_draws(self, name: str) -> np.ndarray:
        """Per-chain draws of a scalar, or of latent abundance as "N[i]"."""
        if name.startswith("N[") and name.endswith("]"):
            return self.latent_n[:, :, int(name[2:-1])].astype(np.float64)
        return self.draws[name]

    def pooled(self, name: str) -> np.ndarray:
        return self.chain_draws(name).reshape(-1)


# Transformed scales


def to_unconstrained(name: str, value: float) -> float:
    if name in LOG_SCALE:
        return float(np.log(value))
    if name in LOGIT_SCALE:
        return float(logit(value))
    return float(value)


def from_unconstrained(name: str, z: float) -> float:
    if name in LOG_SCALE:
        with np.errstate(over="ignore"):
            return float(np.exp(z))
    if name in LOGIT_SCALE:
        return float(expit(z))
    return float(z)


def log_jacobian(name: str, z: float) -> float:
    """log |d value / d z| at unconstrained point z."""
    if name in LOG_SCALE:
        return float(z)
    if name in LOGIT_SCALE:
        return float(log_expit(z) + log_expit(-z))
    return 0.0


# Block updates


def _local_log_target(
    state: ParameterState,
    name: str,
    dataset: Dataset,
    variant: ModelVariant,
    priors: PriorConfig,
    k_strategy: str,
) -> float:
    prior = priors.for_parameter(name).logpdf(state.value(name))
    if prior == -np.inf:
        return -np.inf
    components = component_logliks(state, dataset, variant, PARAMETER_COMPONENTS[name], k_strategy)
    return float(prior + sum(components.values()))


def scalar_log_ratio(
    current: ParameterState,
    proposed: ParameterState,
    name: str,
    dataset: Dataset,
    variant: ModelVariant,
    priors: PriorConfig,
    k_strategy: str = K_SAMPLE,
) -> float:
    """
    Metropolis log acceptance ratio for moving one scalar from current to proposed.

    Includes the Jacobian of the transformed-scale random walk, so the ratio
    for the reverse move is exactly the negative.
    """
    target_new = _local_log_target(proposed, name, dataset, variant, priors, k_strategy)
    if target_new == -np.inf:
        return -np.inf
    target_old = _local_log_target(current, name, dataset, variant, priors, k_strategy)
    z_new = to_unconstrained(name, proposed.value(name))
    z_old = to_unconstrained(name, current.value(name))
    return target_new - target_old + log_jacobian(name, z_new) - log_jacobian(name, z_old)


def n_log_ratio(
    state: ParameterState,
    proposal: np.ndarray,
    dataset: Dataset,
    variant: ModelVariant,
    k_strategy: str = K_SAMPLE,
) -> np.ndarray:
    """Per-site Metropolis log acceptance ratio for moving N to proposal."""
    current = site_loglik(state, dataset, variant, k_strategy=k_strategy)
    proposed = site_loglik(state, dataset, variant, N=proposal, k_strategy=k_strategy)
    with np.errstate(invalid="ignore"):
        ratio = proposed - current
    return np.where(np.isnan(ratio), -np.inf, ratio)


def update_n(
    state: ParameterState,
    dataset: Dataset,
    variant: ModelVariant,
    rng: np.random.Generator,
    widths: np.ndarray,
    k_strategy: str = K_SAMPLE,
) -> Tuple[ParameterState, np.ndarray]:
    """
    Random-walk Metropolis on every N_i.

    Proposals are N_i +/- u with u uniform on {1, ..., w_i}. Given the scalars
    and K, the terms involving N_i involve no other site, so all sites are
    proposed and accepted independently in one vectorized step; this is the
    same transition as a one-site-at-a-time sweep.

    Args:
        state: Current state (finite density)
        dataset: Validated dataset
        variant: Model variant
        rng: Chain generator
        widths: Per-site proposal widths w_i >= 1
        k_strategy: "sample" or "marginalize"

    Returns:
        (new state, per-site accept flags)
    """
    N = np.asarray(state.N, dtype=np.int64)
    steps = rng.integers(1, np.asarray(widths, dtype=np.int64) + 1)
    signs = np.where(rng.random(N.shape[0]) < 0.5, -1, 1)
    proposal = N + signs * steps
    ratio = n_log_ratio(state, proposal, dataset, variant, k_strategy)
    accept = np.log(rng.random(N.shape[0])) < ratio
    if not accept.any():
        return state, accept
    new_N = np.where(accept, proposal, N)
    return replace(state, N=new_N), accept


def k_full_conditional(k: int, n: int, v: int, tp: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact full conditional of the true-call count K in one cell.

    Support is k <= K <= v - (n - k); weights are Binomial(K; v, tp) times
    Hypergeometric(k; K, v - K, n).

    Returns:
        (support, probabilities)

    Raises:
        DatasetError: If the support is empty
    """
    upper = v - (n - k)
    if upper < k or k < 0:
        raise DatasetError(f"empty support for K: k={k}, n={n}, v={v}", block="validation")
    support = np.arange(k, upper + 1)
    log_w = binomial_logpmf(support, v, tp) + hypergeom_logpmf(k, support, v - support, n)
    log_w = np.atleast_1d(log_w)
    return support, np.exp(log_normalize(log_w))


def update_k(
    state: ParameterState,
    dataset: Dataset,
    rng: np.random.Generator,
) -> ParameterState:
    """
    Draw every unmasked K_ij from its exact full conditional.

    Cells are conditionally independent given N and the scalars, so all cells
    are drawn at once from a padded support grid. A cell whose weights are all
    zero (only possible from an infeasible state) keeps its value.

    Raises:
        DatasetError: If any cell has an empty support
    """
    acoustic = dataset.acoustic
    validation = dataset.validation
    cells = ~acoustic.missing_mask
    if not cells.any():
        return state

    Na = np.asarray(state.N)[dataset.design.acoustic_index]
    tp_site = np.asarray(true_positive_rate(Na, state.delta, state.omega), dtype=np.float64)
    tp = np.broadcast_to(tp_site[:, None], acoustic.v.shape)[cells]
    k = validation.k[cells]
    n = validation.n[cells]
    v = acoustic.v[cells]

    lower = k
    upper = v - (n - k)
    if np.any(upper < lower):
        bad = np.argwhere(cells)[int(np.argmax(upper < lower))]
        raise DatasetError("empty support for K: n exceeds v", block="validation", cell=tuple(bad), field="n")

    width = int(np.max(upper - lower)) + 1
    grid = lower[:, None] + np.arange(width)[None, :]
    inside = grid <= upper[:, None]
    log_w = binomial_logpmf(grid, v[:, None], tp[:, None]) + hypergeom_logpmf(
        k[:, None], grid, v[:, None] - grid, n[:, None]
    )
    log_w = np.where(inside, log_w, -np.inf)
    normalized = log_normalize(log_w, axis=1)
    probs = np.exp(normalized)
    feasible = np.isfinite(normalized).any(axis=1)

    u = rng.random(grid.shape[0])
    index = np.minimum((np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1), width - 1)
    drawn = grid[np.arange(grid.shape[0]), index]

    K = np.array(state.K, dtype=np.int64, copy=True)
    K[cells] = np.where(feasible, drawn, K[cells])
    return replace(state, K=K)


def update_scalars(
    state: ParameterState,
    dataset: Dataset,
    variant: ModelVariant,
    rng: np.random.Generator,
    parameters: Tuple[str, ...],
    log_steps: Dict[str, float],
    priors: PriorConfig,
    k_strategy: str = K_SAMPLE,
) -> Tuple[ParameterState, Dict[str, bool]]:
    """
    One-at-a-time Gaussian random-walk Metropolis on transformed scales.

    log scale for delta, omega, lambda and alpha1; logit for p; identity for
    alpha0, beta0 and beta1.

    Returns:
        (new state, accept flag per parameter)
    """
    accepted: Dict[str, bool] = {}
    for name in parameters:
        z = to_unconstrained(name, state.value(name))
        z_new = z + float(np.exp(log_steps[name])) * rng.standard_normal()
        proposed = state.with_values(**{name: from_unconstrained(name, z_new)})
        ratio = scalar_log_ratio(state, proposed, name, dataset, variant, priors, k_strategy)
        accept = bool(np.log(rng.random()) < ratio)
        if accept:
            state = proposed
        accepted[name] = accept
    return state, accepted


# Initialization


def resolve_abundance_kind(dataset: Dataset, config: McmcConfig) -> AbundanceKind:
    """Configured abundance kind, or log-linear exactly when a covariate is present."""
    kind = config.abundance_kind
    if kind is None:
        kind = AbundanceKind.LOG_LINEAR if dataset.covariate is not None else AbundanceKind.CONSTANT
    if kind is AbundanceKind.LOG_LINEAR and dataset.covariate is None:
        raise ConfigurationError("log-linear abundance requested but the dataset has no covariate")
    return kind


def _initial_n(dataset: Dataset, variant: ModelVariant) -> np.ndarray:
    design = dataset.design
    N = np.zeros(design.num_sites, dtype=np.int64)
    if variant.uses_counts:
        counts = dataset.counts
        observed = np.where(counts.missing_mask, 0, counts.c)
        N[design.count_index] = np.maximum(N[design.count_index], observed.max(axis=1))
    if variant.uses_acoustic:
        acoustic = dataset.acoustic
        detected = np.where(acoustic.missing_mask, 0, acoustic.y)
        aidx = design.acoustic_index
        N[aidx] = np.maximum(N[aidx], 1 + detected.max(axis=1))
    return N


def _initial_k(dataset: Dataset) -> np.ndarray:
    acoustic = dataset.acoustic
    validation = dataset.validation
    K = validation.k + (acoustic.v - validation.n) // 2
    return np.where(acoustic.missing_mask, 0, K).astype(np.int64)


def initialize(
    dataset: Dataset,
    rng: np.random.Generator,
    config: Optional[McmcConfig] = None,
    variant: Optional[ModelVariant] = None,
) -> ParameterState:
    """
    Find a finite-density starting state.

    N starts at the largest observed count at each site, or one plus the
    largest detection at acoustic sites; K starts at k plus half the
    unchecked calls; scalars are drawn from the truncated starting priors
    until the joint density is finite.

    Args:
        dataset: Validated dataset
        rng: Chain generator
        config: Sampler settings (fixed values, abundance kind, priors)
        variant: Variant (defaults to the dataset's)

    Returns:
        ParameterState with finite log posterior

    Raises:
        InitializationError: After MAX_INIT_ATTEMPTS failures, naming the
            components that were never finite
    """
    config = config or McmcConfig()
    variant = dataset.variant if variant is None else ModelVariant.parse(variant)
    kind = resolve_abundance_kind(dataset, config)
    names = scalar_parameters(variant, kind)
    starting = PriorConfig.truncated()

    N = _initial_n(dataset, variant)
    K = _initial_k(dataset) if variant.uses_validation and config.k_strategy == K_SAMPLE else None

    violated: List[str] = []
    for attempt in range(MAX_INIT_ATTEMPTS):
        values = {
            name: config.fixed[name] if name in config.fixed else starting.for_parameter(name).sample(rng)
            for name in names
        }
        if kind is AbundanceKind.CONSTANT:
            abundance = AbundanceModel.constant(values.get(LAMBDA, 1.0))
        else:
            abundance = AbundanceModel.log_linear(values.get(BETA0, 0.0), values.get(BETA1, 0.0), dataset.covariate)
        state = ParameterState(
            N=N,
            K=K,
            alpha0=values.get(ALPHA0, 0.0),
            alpha1=values.get(ALPHA1, 0.0),
            delta=values.get(DELTA, 0.0),
            omega=values.get(OMEGA, 0.0),
            p=values.get(P, 0.0),
            abundance=abundance,
        )
        violated = [
            name for name in names if config.priors.for_parameter(name).logpdf(state.value(name)) == -np.inf
        ]
        components = component_logliks(state, dataset, variant, k_strategy=config.k_strategy)
        violated += [name for name, value in components.items() if not np.isfinite(value)]
        if not violated:
            if attempt:
                logger.debug(f"[MCMC] Initialized after {attempt + 1} attempts")
            return state

    raise InitializationError(
        f"no finite-density starting state found in {MAX_INIT_ATTEMPTS} attempts", components=violated
    )


# Chains


@dataclass
class _ChainResult:
    draws: Dict[str, np.ndarray]
    latent_n: np.ndarray
    log_density: np.ndarray
    acceptance: Dict[str, float]


def _run_chain(
    dataset: Dataset,
    config: McmcConfig,
    chain: int,
    progress: Optional[ProgressManager] = None,
) -> _ChainResult:
    variant = dataset.variant
    kind = resolve_abundance_kind(dataset, config)
    parameters = tuple(p for p in scalar_parameters(variant, kind) if p not in config.fixed)
    sample_k = variant.uses_validation and config.k_strategy == K_SAMPLE
    rng = stream(config.seed, Stream.CHAIN, chain)

    state = initialize(dataset, rng, config, variant)
    G = dataset.design.num_sites
    log_widths = np.full(G, np.log(config.n_proposal_width), dtype=np.float64)
    log_steps = {name: float(np.log(INITIAL_STEP)) for name in parameters}

    start = config.adapt + config.burn_in
    retained = config.retained_per_chain
    draws = {name: np.empty(retained, dtype=np.float64) for name in parameters}
    latent_n = np.empty((retained, G), dtype=np.int64)
    log_density = np.empty(retained, dtype=np.float64)
    n_accepts = np.zeros(G, dtype=np.int64)
    scalar_accepts = {name: 0 for name in parameters}
    counted = 0
    slot = 0

    for t in range(config.iterations):
        widths = np.clip(np.rint(np.exp(log_widths)), 1, MAX_N_WIDTH).astype(np.int64)
        state, n_accept = update_n(state, dataset, variant, rng, widths, config.k_strategy)
        if sample_k:
            state = update_k(state, dataset, rng)
        state, accepted = update_scalars(
            state, dataset, variant, rng, parameters, log_steps, config.priors, config.k_strategy
        )

        if t < config.adapt:
            gain = (t + 1) ** -ADAPTATION_DECAY
            log_widths += gain * (n_accept - config.target_accept)
            log_widths = np.clip(log_widths, 0.0, np.log(MAX_N_WIDTH))
            for name in parameters:
                log_steps[name] += gain * (float(accepted[name]) - config.target_accept)
        else:
            n_accepts += n_accept
            for name in parameters:
                scalar_accepts[name] += accepted[name]
            counted += 1

        keep = t >= start and (t - start + 1) % config.thin == 0
        notify = progress is not None and (t + 1) % config.progress_every == 0
        if keep or notify:
            density = log_posterior(state, dataset, variant, config.priors, config.k_strategy)
            if keep:
                if not np.isfinite(density):
                    logger.warning(f"[MCMC] [WARN] chain {chain} retained a non-finite state at iteration {t}")
                for name in parameters:
                    draws[name][slot] = state.value(name)
                latent_n[slot] = state.N
                log_density[slot] = density
                slot += 1
            if notify:
                progress.notify(ProgressEvent("chain", chain, t + 1, config.iterations, log_density=density))

    acceptance = {"N": float(n_accepts.mean() / counted)}
    acceptance.update({name: scalar_accepts[name] / counted for name in parameters})
    logger.debug(f"[MCMC] chain {chain} done; acceptance {acceptance}")
    return _ChainResult(draws=draws, latent_n=latent_n, log_density=log_density, acceptance=acceptance)


def run(
    dataset: Dataset,
    config: Optional[McmcConfig] = None,
    variant: Optional[ModelVariant] = None,
    progress: Optional[ProgressManager] = None,
) -> ChainOutput:
    """
    Run independent chains and collect their retained draws.

    Output depends only on (config, dataset, variant): chain c draws from
    its own stream keyed by (seed, chain), so running chains in worker
    processes gives the same result as running them in sequence.

    Args:
        dataset: Validated dataset
        config: Sampler settings (defaults to McmcConfig())
        variant: Fit a different variant to the same data blocks
        progress: Progress subscriptions (per-iteration events only when
            chains run in this process)

    Returns:
        ChainOutput

    Raises:
        ConfigurationError: On inconsistent settings
        DatasetError: If the dataset does not support the variant
        InitializationError: If a chain cannot start
    """
    config = config or McmcConfig()
    if variant is not None and ModelVariant.parse(variant) is not dataset.variant:
        dataset = with_variant(dataset, variant)
    variant = dataset.variant
    kind = resolve_abundance_kind(dataset, config)
    names = scalar_parameters(variant, kind)
    unknown = sorted(set(config.fixed) - set(names))
    if unknown:
        raise ConfigurationError(f"fixed parameters {unknown} are not sampled by variant {variant.value}")
    if config.k_strategy == K_MARGINALIZE and variant.uses_validation:
        logger.debug("[MCMC] K summed out of the validation block")
    parameters = tuple(p for p in names if p not in config.fixed)

    logger.info(
        f"[MCMC] Fitting {variant.value} ({kind.value}): {config.chains} chains x {config.iterations} "
        f"iterations, adapt {config.adapt}, burn-in {config.burn_in}, thin {config.thin}"
    )

    if config.workers > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, config.chains)) as executor:
            futures = [executor.submit(_run_chain, dataset, config, c) for c in range(config.chains)]
            results = [future.result() for future in futures]
        if progress is not None:
            for c in range(config.chains):
                progress.notify(ProgressEvent("chain", c, config.iterations, config.iterations))
    else:
        results = [_run_chain(dataset, config, c, progress) for c in range(config.chains)]

    digest = hashlib.sha256()
    digest.update(config.digest().encode("utf-8"))
    digest.update(variant.value.encode("utf-8"))
    digest.update(kind.value.encode("utf-8"))
    digest.update(dataset.digest().encode("utf-8"))

    acceptance = {
        name: float(np.mean([r.acceptance[name] for r in results])) for name in results[0].acceptance
    }
    output = ChainOutput(
        variant=variant,
        parameters=parameters,
        draws={name: np.stack([r.draws[name] for r in results]) for name in parameters},
        latent_n=np.stack([r.latent_n for r in results]),
        log_density=np.stack([r.log_density for r in results]),
        acceptance_rates=acceptance,
        config_hash=digest.hexdigest(),
        seed=config.seed,
        metadata={
            "abundance_kind": kind.value,
            "k_strategy": config.k_strategy,
            "fixed": dict(config.fixed),
            "schedule": "adapt, then burn-in, then retained",
            "start_iteration": config.adapt + config.burn_in,
            "thin": config.thin,
            "retained_per_chain": config.retained_per_chain,
            "retained_draws": config.chains * config.retained_per_chain,
            "retained_formula": "chains * floor((iterations - burn_in - adapt) / thin)",
            "acceptance_by_chain": [r.acceptance for r in results],
        },
    )
    low = [name for name, rate in acceptance.items() if rate < 0.1]
    if low:
        logger.warning(f"[MCMC] [WARN] Low acceptance for {', '.join(low)}")
    logger.info(f"[MCMC] [OK] {output.num_draws} draws retained; acceptance {acceptance}")
    return output
