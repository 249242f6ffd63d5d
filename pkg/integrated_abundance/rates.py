"""Detection and true-positive rates shared by the simulator and the likelihoods."""

import logging
from typing import Tuple, Union

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

ArrayLike = Union[float, int, np.ndarray]


def detection_prob(N_i: ArrayLike, alpha0: float, alpha1: float) -> ArrayLike:
    """
    Probability the clustering algorithm flags the species at a site.

    logit(pi_i) = alpha0 + alpha1 * N_i, so alpha0 alone is the site-level
    false-positive rate and alpha0 + alpha1 is the single-individual rate.

    Args:
        N_i: Latent abundance (scalar or array)
        alpha0: Logit-scale false-positive rate
        alpha1: Logit-scale per-individual increment (>= 0)

    Returns:
        pi_i in (0, 1), same shape as N_i
    """
    pi = expit(alpha0 + alpha1 * np.asarray(N_i, dtype=np.float64))
    return float(pi) if np.ndim(pi) == 0 else pi


def true_positive_rate(
    N_i: ArrayLike, delta: float, omega: float, return_flag: bool = False
) -> Union[ArrayLike, Tuple[ArrayLike, ArrayLike]]:
    """
    Share of detected vocalizations that are true calls: delta*N / (delta*N + omega).

    A site with no individuals and no false-positive process (0/0) is
    assigned a rate of 0 and flagged.

    Args:
        N_i: Latent abundance (scalar or array)
        delta: Per-individual vocalization rate
        omega: False-positive vocalization rate
        return_flag: Also return a boolean mask of undefined (0/0) entries

    Returns:
        tp in [0, 1], or (tp, undefined) when return_flag is set
    """
    numerator = delta * np.asarray(N_i, dtype=np.float64)
    denominator = numerator + omega
    undefined = denominator <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = np.where(undefined, 0.0, numerator / np.where(undefined, 1.0, denominator))

    if np.any(undefined):
        logger.debug(f"[Rates] true-positive rate undefined (0/0) at {int(np.sum(undefined))} site(s); using 0")

    if np.ndim(tp) == 0:
        tp, undefined = float(tp), bool(undefined)
    if return_flag:
        return tp, undefined
    return tp
