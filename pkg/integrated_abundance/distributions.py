"""Numerically stable log densities.

All combinatorial terms go through log-gamma so vocalization counts in the
thousands never overflow. Every function broadcasts over numpy arrays and
returns -inf (never NaN) outside the support.
"""

import numpy as np
from scipy.special import gammaln, log_expit, logsumexp, xlog1py, xlogy

LOG_2PI = float(np.log(2.0 * np.pi))


def _as_output(out: np.ndarray):
    return float(out) if np.ndim(out) == 0 else out


def log_comb(n, k):
    """log C(n, k) for 0 <= k <= n."""
    n = np.asarray(n, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def poisson_logpmf(x, mu):
    """Poisson log-pmf; a zero mean puts all mass on x = 0."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    valid = (x >= 0) & (mu >= 0) & np.isfinite(mu)
    xs = np.where(valid, x, 0.0)
    ms = np.where(valid, mu, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(xs, ms) - ms - gammaln(xs + 1.0)
    return _as_output(np.where(valid, out, -np.inf))


def binomial_logpmf(x, n, p):
    """Binomial log-pmf of x successes in n trials."""
    x = np.asarray(x, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    valid = (x >= 0) & (x <= n) & (p >= 0.0) & (p <= 1.0)
    xs = np.where(valid, x, 0.0)
    ns = np.where(valid, n, 0.0)
    ps = np.where(valid, p, 0.5)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = log_comb(ns, xs) + xlogy(xs, ps) + xlog1py(ns - xs, -ps)
    return _as_output(np.where(valid, out, -np.inf))


def hypergeom_logpmf(k, K, Q, n):
    """
    Log-probability that a uniform sample of n items from K true and Q false
    items contains exactly k true ones.
    """
    k = np.asarray(k, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    valid = (
        (K >= 0) & (Q >= 0) & (n >= 0) & (n <= K + Q)
        & (k >= np.maximum(0.0, n - Q)) & (k <= np.minimum(K, n))
    )
    ks = np.where(valid, k, 0.0)
    Ks = np.where(valid, K, 0.0)
    Qs = np.where(valid, Q, 0.0)
    ns = np.where(valid, n, 0.0)
    out = log_comb(Ks, ks) + log_comb(Qs, ns - ks) - log_comb(Ks + Qs, ns)
    return _as_output(np.where(valid, out, -np.inf))


def bernoulli_logit_logpmf(y, eta):
    """Bernoulli log-pmf with success probability inverse-logit(eta)."""
    y = np.asarray(y)
    eta = np.asarray(eta, dtype=np.float64)
    out = np.where(y == 1, log_expit(eta), log_expit(-eta))
    out = np.where((y == 0) | (y == 1), out, -np.inf)
    return _as_output(out)


def normal_logpdf(x, mean: float, variance: float):
    """Normal log-density parameterized by variance (not standard deviation)."""
    x = np.asarray(x, dtype=np.float64)
    return _as_output(-0.5 * (LOG_2PI + np.log(variance)) - (x - mean) ** 2 / (2.0 * variance))


def uniform_logpdf(x, lower: float, upper: float):
    """Uniform log-density on the closed interval [lower, upper]."""
    x = np.asarray(x, dtype=np.float64)
    inside = (x >= lower) & (x <= upper)
    return _as_output(np.where(inside, -np.log(upper - lower), -np.inf))


def log_normalize(log_weights: np.ndarray, axis: int = -1) -> np.ndarray:
    """Normalize log-weights along an axis; rows of all -inf stay -inf."""
    with np.errstate(invalid="ignore"):
        total = logsumexp(log_weights, axis=axis, keepdims=True)
        out = log_weights - total
    return np.where(np.isfinite(total), out, -np.inf)
