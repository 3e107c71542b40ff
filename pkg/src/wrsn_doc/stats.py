"""Distribution primitives used by the maliciousness scorers.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import numpy as np
from scipy import special

SQRT_2PI = np.sqrt(2.0 * np.pi)


def poisson_logpmf(k, lam):
    k = np.asarray(k, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return special.xlogy(k, lam) - lam - special.gammaln(k + 1.0)


def poisson_pmf(k, lam):
    return np.exp(poisson_logpmf(k, lam))


def poisson_cdf(k, lam):
    """P(X <= k); zero for k < 0."""
    k = np.floor(np.asarray(k, dtype=float))
    lam = np.asarray(lam, dtype=float)
    return np.where(k < 0, 0.0, special.pdtr(np.maximum(k, 0.0), lam))


def poisson_two_sided_tail(count, lam):
    """P(|X - lam| >= |count - lam|) for X ~ Poisson(lam)."""
    count = np.asarray(count, dtype=float)
    lam = np.asarray(lam, dtype=float)
    d = np.abs(count - lam)
    # integer support: lower tail k <= lam - d, upper tail k >= lam + d
    lo = np.floor(lam - d + 1e-12)
    hi = np.ceil(lam + d - 1e-12)
    lower = poisson_cdf(lo, lam)
    upper = np.where(hi <= 0, 1.0, special.pdtrc(np.maximum(hi - 1.0, 0.0), lam))
    return np.clip(lower + upper, 0.0, 1.0)


def gaussian_pdf(x, mu, var):
    x = np.asarray(x, dtype=float)
    var = np.asarray(var, dtype=float)
    return np.exp(-((x - mu) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


def gaussian_two_sided_tail(x, mu, var):
    """2 * (1 - Phi(|z|)) computed as erfc(|z| / sqrt 2) to keep tail precision."""
    z = np.abs(np.asarray(x, dtype=float) - mu) / np.sqrt(var)
    return special.erfc(z / np.sqrt(2.0))


def beta_logpdf(x, a, b):
    x = np.asarray(x, dtype=float)
    return special.xlogy(a - 1.0, x) + special.xlog1py(b - 1.0, -x) - special.betaln(a, b)


def beta_pdf(x, a, b):
    return np.exp(beta_logpdf(x, a, b))


def beta_cdf(x, a, b):
    """Regularized incomplete Beta function I_x(a, b)."""
    return special.betainc(a, b, np.clip(x, 0.0, 1.0))


def beta_mode(a, b):
    """Mode of Beta(a, b); falls back to the mean when the density has no interior maximum."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    interior = (a > 1.0) & (b > 1.0)
    mean = a / (a + b)
    with np.errstate(invalid="ignore", divide="ignore"):
        mode = np.where(interior, (a - 1.0) / (a + b - 2.0), mean)
    mode = np.where((a <= 1.0) & (b > 1.0), 0.0, mode)
    mode = np.where((a > 1.0) & (b <= 1.0), 1.0, mode)
    return mode


def beta_two_sided_tail(x, a, b):
    """Mass of Beta(a, b) at least as far from the mode as ``x``."""
    m = beta_mode(a, b)
    d = np.abs(np.asarray(x, dtype=float) - m)
    lower = np.where(m - d > 0.0, beta_cdf(m - d, a, b), 0.0)
    upper = np.where(m + d < 1.0, 1.0 - beta_cdf(m + d, a, b), 0.0)
    # d == 0 covers the whole support
    return np.where(d == 0.0, 1.0, np.clip(lower + upper, 0.0, 1.0))
