"""Convergence diagnostics and posterior summaries."""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np

from .exceptions import DiagnosticsError

logger = logging.getLogger(__name__)

QUANTILE_METHOD = "linear"  # type 7: interpolate between order statistics
CI_PROBS = (0.025, 0.5, 0.975)
RHAT_THRESHOLD = 1.1


@dataclass(frozen=True)
class PosteriorSummary:
    """Median, central 95% interval and convergence statistics of one parameter."""

    parameter: str
    median: float
    ci_lower: float
    ci_upper: float
    ci_width: float
    rhat: float
    ess: float
    degenerate: bool = False

    @property
    def is_latent(self) -> bool:
        return self.parameter.startswith("N[")

    def covers(self, truth: float) -> bool:
        return self.ci_lower <= truth <= self.ci_upper

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass(frozen=True)
class BiasResult:
    """Bias of a point estimate: percent when relative, absolute when the truth is 0."""

    value: float
    relative: bool


def _as_chains(chains, minimum_draws: int = 1) -> np.ndarray:
    x = np.asarray(chains, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DiagnosticsError(f"draws must be (chains, draws), got shape {x.shape}")
    if x.shape[1] < minimum_draws:
        raise DiagnosticsError(f"need at least {minimum_draws} draws per chain, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise DiagnosticsError("draws contain non-finite values")
    return x


def rhat(chains, return_flag: bool = False) -> Union[float, Tuple[float, bool]]:
    """
    Classic Gelman-Rubin potential scale reduction factor.

    R = sqrt(((n - 1)/n * W + B/n) / W) with W the mean within-chain variance
    and B/n the variance of the chain means. Sampling noise can push the value
    just below 1 in short runs; it is reported as computed and floored only by
    rhat_below.

    Args:
        chains: Array-like of shape (chains, draws), >= 2 chains of >= 4 draws
        return_flag: Also return the degenerate-chain flag

    Returns:
        R-hat, or (R-hat, degenerate) when return_flag is set. Zero
        within-chain variance gives 1.0 when all chains agree and inf
        otherwise, flagged degenerate in both cases.

    Raises:
        DiagnosticsError: With fewer than 2 chains or 4 draws per chain
    """
    x = _as_chains(chains, minimum_draws=4)
    m, n = x.shape
    if m < 2:
        raise DiagnosticsError("R-hat needs at least 2 chains")

    means = x.mean(axis=1)
    W = float(x.var(axis=1, ddof=1).mean())
    B = float(n * means.var(ddof=1))

    degenerate = W == 0.0
    if degenerate:
        value = 1.0 if B == 0.0 else float("inf")
        logger.warning(f"[Diagnostics] [WARN] zero within-chain variance; R-hat reported as {value}")
    else:
        value = float(np.sqrt(((n - 1) / n * W + B / n) / W))
    return (value, degenerate) if return_flag else value


def ess(chains) -> float:
    """
    Effective sample size from multi-chain autocorrelations.

    Autocorrelations are combined across chains and the sum is truncated
    with Geyer's initial monotone sequence rule. NaN for constant draws.
    """
    x = _as_chains(chains, minimum_draws=4)
    m, n = x.shape
    centered = x - x.mean(axis=1, keepdims=True)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n=size, axis=1)[:, :n] / n

    W = float((acov[:, 0] * n / (n - 1)).mean())
    B_over_n = float(x.mean(axis=1).var(ddof=1)) if m > 1 else 0.0
    var_plus = (n - 1) / n * W + B_over_n
    if var_plus <= 0.0:
        return float("nan")

    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    non_positive = np.flatnonzero(pairs <= 0.0)
    if non_positive.size:
        pairs = pairs[: non_positive[0]]
    pairs = np.minimum.accumulate(pairs)
    tau = max(-1.0 + 2.0 * float(pairs.sum()), 1.0 / np.log10(m * n))
    return float(m * n / tau)


def quantiles(draws, probs: Iterable[float] = CI_PROBS) -> np.ndarray:
    """Type-7 (linear interpolation) quantiles of pooled draws."""
    x = np.asarray(draws, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DiagnosticsError("no draws to summarize")
    return np.quantile(x, list(probs), method=QUANTILE_METHOD)


def summarize(chains, parameter: str = "") -> PosteriorSummary:
    """
    Summarize pooled draws of one parameter.

    Args:
        chains: Array-like (chains, draws) or a flat sequence (one chain)
        parameter: Parameter name

    Returns:
        PosteriorSummary; rhat and ess are NaN when there are too few chains
        or draws to compute them

    Raises:
        DiagnosticsError: If there are no draws
    """
    x = _as_chains(chains)
    lower, median, upper = quantiles(x)
    m, n = x.shape

    value, degenerate = float("nan"), False
    if m >= 2 and n >= 4:
        value, degenerate = rhat(x, return_flag=True)
    effective = ess(x) if n >= 4 else float("nan")

    return PosteriorSummary(
        parameter=parameter,
        median=float(median),
        ci_lower=float(lower),
        ci_upper=float(upper),
        ci_width=float(upper - lower),
        rhat=value,
        ess=effective,
        degenerate=degenerate,
    )


def summarize_output(output, include_latent: bool = False) -> Dict[str, PosteriorSummary]:
    """
    Summaries of every sampled scalar of a ChainOutput, optionally with N[i].

    Args:
        output: ChainOutput
        include_latent: Also summarize each site's latent abundance

    Returns:
        Dict parameter name -> PosteriorSummary in output order
    """
    summaries = {name: summarize(output.chain_draws(name), name) for name in output.parameters}
    if include_latent:
        for site in range(output.latent_n.shape[2]):
            name = f"N[{site}]"
            summaries[name] = summarize(output.chain_draws(name), name)
    return summaries


def relative_bias(estimate: float, truth: float) -> BiasResult:
    """
    Relative bias (estimate - truth) / truth in percent.

    A zero truth has no relative bias; the absolute bias is returned with
    relative=False instead.
    """
    if truth == 0:
        logger.warning("[Diagnostics] [WARN] truth is 0; reporting absolute bias")
        return BiasResult(value=float(estimate - truth), relative=False)
    return BiasResult(value=float(100.0 * (estimate - truth) / truth), relative=True)


def rhat_below(value: float, threshold: float) -> bool:
    """Convergence test on one R-hat, floored at 1; NaN never passes."""
    if np.isnan(value):
        return False
    return max(1.0, value) < threshold


def converged(
    summaries: Mapping[str, PosteriorSummary],
    threshold: float = RHAT_THRESHOLD,
    include_latent: bool = False,
) -> bool:
    """
    True iff every monitored parameter has R-hat below the threshold.

    Latent abundance (N[i]) is not monitored unless include_latent is set.
    An R-hat that could not be computed counts as not converged.
    """
    monitored = [s for s in summaries.values() if include_latent or not s.is_latent]
    if not monitored:
        return False
    failing = [s.parameter for s in monitored if not rhat_below(s.rhat, threshold)]
    if failing:
        logger.info(f"[Diagnostics] Not converged (R-hat >= {threshold}): {', '.join(failing)}")
        return False
    return True


def convergence_metadata(threshold: Optional[float] = None) -> Dict[str, object]:
    """Diagnostic conventions recorded alongside results."""
    return {
        "quantile_type": 7,
        "quantile_method": QUANTILE_METHOD,
        "ci_probs": list(CI_PROBS),
        "rhat": "classic Gelman-Rubin, reported unfloored; floored at 1 for the convergence check",
        "rhat_threshold": RHAT_THRESHOLD if threshold is None else threshold,
        "convergence_excludes_latent_N": True,
        "ess": "multi-chain autocorrelation, initial monotone sequence",
    }
