"""Closed-form and quadrature references used by several test modules."""

import math

import numpy as np
from scipy import integrate, optimize


def batch_means_se(draws, n_batches=50):
    """Monte-Carlo standard error of the mean of a correlated chain."""
    draws = np.asarray(draws, dtype=float)
    m = draws.size // n_batches
    means = draws[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def known_variance_posterior(x, y, sigma2, m0, s0):
    """Normal posterior of the slope of ``y = theta x + N(0, sigma2)`` under ``N(m0, s0**2)``."""
    prec = 1.0 / s0**2 + float(x @ x) / sigma2
    mean = (m0 / s0**2 + float(x @ y) / sigma2) / prec
    return mean, 1.0 / math.sqrt(prec)


def _slope_marginal_grid(x, y, m0, s0, a, b, w, half_width_sds=12.0):
    n = x.size
    sxx, sxy, syy = float(x @ x), float(x @ y), float(y @ y)
    t_ls = sxy / sxx
    half = half_width_sds * math.sqrt((syy - sxy**2 / sxx) / max(n - 1, 1) / sxx) / math.sqrt(min(w, 1.0)) + 1e-12
    grid = np.linspace(t_ls - half, t_ls + half, 200_001)
    ssr = syy - 2 * grid * sxy + grid**2 * sxx
    logp = -0.5 * ((grid - m0) / s0) ** 2 - (a + w * n / 2) * np.log(b + w * ssr / 2)
    return grid, np.exp(logp - logp.max())


def slope_marginal_quantiles(x, y, m0, s0, a, b, w, probs):
    """Quantiles of the slope marginal described in :func:`slope_marginal_moments`.

    Adaptive quadrature over the whole real line, so heavy tails are kept.
    """
    n = x.size
    sxx, sxy, syy = float(x @ x), float(x @ y), float(y @ y)
    t_ls = sxy / sxx
    ssr_min = syy - sxy**2 / sxx
    expo = a + w * n / 2
    log_peak = -expo * math.log(b + w * ssr_min / 2)

    def f(t):
        ssr = ssr_min + sxx * (t - t_ls) ** 2
        return math.exp(-0.5 * ((t - m0) / s0) ** 2 - expo * math.log(b + w * ssr / 2) - log_peak)

    left = integrate.quad(f, -np.inf, t_ls, epsabs=0, epsrel=1e-12, limit=500)[0]
    right = integrate.quad(f, t_ls, np.inf, epsabs=0, epsrel=1e-12, limit=500)[0]
    z = left + right

    def cdf(t):
        if t <= t_ls:
            return integrate.quad(f, -np.inf, t, epsabs=0, epsrel=1e-12, limit=500)[0] / z
        return (left + integrate.quad(f, t_ls, t, epsabs=0, epsrel=1e-12, limit=500)[0]) / z

    out = []
    for p in probs:
        step = math.sqrt(ssr_min / sxx)
        lo, hi = t_ls - step, t_ls + step
        while cdf(lo) > p:
            lo = t_ls - 2 * (t_ls - lo)
        while cdf(hi) < p:
            hi = t_ls + 2 * (hi - t_ls)
        out.append(optimize.brentq(lambda t: cdf(t) - p, lo, hi, xtol=1e-12))
    return np.array(out)


def slope_marginal_moments(x, y, m0, s0, a, b, w=1.0):
    """Mean and sd of the slope when ``sigma2 ~ InvGamma(a, b)`` is integrated out analytically.

    The power posterior ``exp(-w * NLL) * prior`` has slope marginal
    ``N(theta; m0, s0) * (b + w * SSR(theta) / 2) ** -(a + w * n / 2)``.
    """
    grid, p = _slope_marginal_grid(x, y, m0, s0, a, b, w)
    z = integrate.trapezoid(p, grid)
    mean = integrate.trapezoid(grid * p, grid) / z
    var = integrate.trapezoid((grid - mean) ** 2 * p, grid) / z
    return mean, math.sqrt(var)
