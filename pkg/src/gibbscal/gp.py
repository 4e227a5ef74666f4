"""Gaussian-process and shift-family discrepancy priors, GLS and effective sample size."""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, stats

from .core import LOG_2PI, Uniform
from .errors import ConditioningError, DomainError, StructuralError

NUGGET_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class SqExpKernel:
    """``k(x, x') = s2 * exp(-(x - x')**2 / (2 * length_scale**2))`` plus ``nugget`` on the diagonal."""

    s2: float
    length_scale: float
    nugget: float = 0.0

    def __post_init__(self):
        if not self.s2 >= 0:
            raise DomainError(f"s2 must be non-negative, got {self.s2}")
        if not self.length_scale > 0:
            raise DomainError(f"length_scale must be positive, got {self.length_scale}")
        if not self.nugget >= 0:
            raise DomainError(f"nugget must be non-negative, got {self.nugget}")

    def correlation(self, x):
        x = np.asarray(x, dtype=float)
        d = x[:, None] - x[None, :]
        return np.exp(-0.5 * (d / self.length_scale) ** 2)

    def cov(self, x):
        K = self.s2 * self.correlation(x)
        K[np.diag_indices_from(K)] += self.nugget
        return K

    def to_json(self):
        return json.dumps({"s2": self.s2, "length_scale": self.length_scale, "nugget": self.nugget}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(float(d["s2"]), float(d["length_scale"]), float(d.get("nugget", 0.0)))


def robust_cholesky(K, scale=None):
    """Lower Cholesky factor, adding jitter ``0, 1e-10, 1e-8, 1e-6`` times ``scale`` as needed."""
    if scale is None:
        scale = float(np.mean(np.diag(K)))
    n = K.shape[0]
    for jitter in NUGGET_LADDER:
        try:
            return linalg.cholesky(K + jitter * scale * np.eye(n), lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            continue
    raise ConditioningError("covariance not positive definite after nugget escalation to 1e-6")


def log_marginal_likelihood(residuals, x, kernel):
    """Mean-zero Gaussian log marginal likelihood of ``residuals``."""
    r = np.asarray(residuals, dtype=float)
    L, _ = robust_cholesky(kernel.cov(x), scale=kernel.s2 + kernel.nugget)
    a = linalg.solve_triangular(L, r, lower=True, check_finite=False)
    return -0.5 * a @ a - np.log(np.diag(L)).sum() - 0.5 * r.size * LOG_2PI


def empirical_discrepancy(data, model, theta_hat):
    """Residuals ``y - eta(x; theta_hat)``."""
    return data.y - model.predict(data.x, theta_hat)


def _hyper_bounds(residuals, x):
    v = max(float(np.mean(np.square(residuals))), 1e-300)
    dx = float(np.min(np.diff(x)))
    span = float(x[-1] - x[0])
    return [
        (math.log(v * 1e-6), math.log(v * 1e3)),
        (math.log(dx * 0.1), math.log(span * 10)),
        (math.log(v * 1e-10), math.log(v * 10)),
    ], v, dx, span


def fit_gp_mle(residuals, x, init=None, n_starts=8):
    """Maximum marginal-likelihood squared-exponential kernel for mean-zero residuals.

    Bounded Nelder-Mead on ``log(s2, length_scale, nugget)`` from ``init`` and
    ``n_starts`` lattice points spanning the residual mean square and the
    x spacing/range. The best optimum is returned; it is never worse than
    ``init``.
    """
    r = np.asarray(residuals, dtype=float)
    x = np.asarray(x, dtype=float)
    if r.size != x.size:
        raise StructuralError("residuals and x differ in length")
    if r.size < 10:
        raise DomainError("need at least 10 residuals to fit a GP")
    if np.any(np.diff(x) <= 0):
        raise DomainError("x must be strictly increasing")
    bounds, v, dx, span = _hyper_bounds(r, x)

    def clip(p):
        return np.array([min(max(pi, lo), hi) for pi, (lo, hi) in zip(p, bounds)])

    def nll(p):
        k = SqExpKernel(math.exp(p[0]), math.exp(p[1]), math.exp(p[2]))
        try:
            return -log_marginal_likelihood(r, x, k)
        except ConditioningError:
            return 1e300

    starts = []
    if init is not None:
        starts.append(clip(np.log([max(init.s2, 1e-300), init.length_scale, max(init.nugget, v * 1e-10)])))
    # 4 length scales x 2 variances on a log lattice
    for ls in np.geomspace(max(2 * dx, span / 50), span, 4):
        for s2 in (v, 10 * v):
            starts.append(clip(np.log([s2, ls, v * 1e-4])))
    starts = starts[: n_starts + (init is not None)]

    best_p, best_f = None, math.inf
    for p0 in starts:
        # when the nugget sits on its bound the simplex stalls instead of
        # shrinking, so iterations are capped; the best start is reached well within the cap
        res = optimize.minimize(
            nll, p0, method="Nelder-Mead", bounds=bounds,
            options={"maxiter": 400, "xatol": 1e-6, "fatol": 1e-9, "adaptive": True},
        )
        if res.fun < best_f:
            best_p, best_f = res.x, res.fun
    if init is not None:
        f_init = -log_marginal_likelihood(r, x, init) if init.s2 + init.nugget > 0 else math.inf
        if f_init <= best_f:
            return init
    if best_p is None or not math.isfinite(best_f) or best_f >= 1e300:
        raise ConditioningError("marginal likelihood could not be evaluated at any start")
    return SqExpKernel(*np.exp(best_p))


def sample_gp(kernel, x, rng, size=None):
    """Mean-zero GP draw(s) on ``x`` via Cholesky."""
    x = np.asarray(x, dtype=float)
    shape = (x.size,) if size is None else (size, x.size)
    if kernel.s2 == 0 and kernel.nugget == 0:
        return np.zeros(shape)
    L = _sampling_factor(kernel.cov(x), kernel.s2 + kernel.nugget)
    z = rng.standard_normal(shape)
    return z @ L.T


def _sampling_factor(K, scale):
    """Matrix ``L`` with ``L @ L.T == K``.

    Plain Cholesky when it succeeds. Otherwise the symmetric square root with
    eigenvalues clipped at zero: unlike a jittered Cholesky this adds no
    independent noise, so near-rank-deficient kernels (very long length
    scales) give draws with the right correlation.
    """
    try:
        return linalg.cholesky(K, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    evals, evecs = np.linalg.eigh(K)
    if np.min(evals) < -NUGGET_LADDER[-1] * scale:
        raise ConditioningError("covariance has a clearly negative eigenvalue")
    return evecs * np.sqrt(np.clip(evals, 0.0, None))


@dataclass(frozen=True, eq=False)
class GPDiscrepancy:
    """Mean-zero GP discrepancy plus i.i.d. Gaussian noise of sd ``noise_sd``."""

    kernel: SqExpKernel
    noise_sd: float = 0.0

    def mean(self, x):
        return np.zeros(np.shape(x))

    def sample(self, x, rng):
        delta = sample_gp(self.kernel, x, rng)
        if self.noise_sd > 0:
            delta = delta + rng.normal(0.0, self.noise_sd, np.shape(x))
        return delta


@dataclass(frozen=True, eq=False)
class ShiftFamily:
    """Constant shift on ``[start, stop]`` of x with a uniformly drawn magnitude, zero elsewhere.

    One magnitude is drawn per replicate. Noise ``noise_sd`` is added everywhere.
    """

    start: float
    stop: float
    magnitude: Uniform
    noise_sd: float = 0.0

    def region(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.start) & (x <= self.stop)

    def mean(self, x):
        m = 0.5 * (self.magnitude.lo + self.magnitude.hi)
        return np.where(self.region(x), m, 0.0)

    def sample(self, x, rng):
        delta = np.where(self.region(x), self.magnitude.sample(rng), 0.0)
        if self.noise_sd > 0:
            delta = delta + rng.normal(0.0, self.noise_sd, np.shape(x))
        return delta


@dataclass(frozen=True, eq=False)
class NoDiscrepancy:
    """Measurement noise only."""

    noise_sd: float = 0.0

    def mean(self, x):
        return np.zeros(np.shape(x))

    def sample(self, x, rng):
        if self.noise_sd > 0:
            return rng.normal(0.0, self.noise_sd, np.shape(x))
        return np.zeros(np.shape(x))


# ---------------------------------------------------------------------------
# effective sample size
# ---------------------------------------------------------------------------


def autocorrelation(v):
    """Biased sample autocorrelation at lags ``0..n-1`` (mean removed)."""
    v = np.asarray(v, dtype=float)
    v = v - v.mean()
    n = v.size
    f = np.fft.rfft(v, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    return acov / acov[0]


def effective_sample_size(residuals, x=None):
    """Effective number of independent observations in a residual series.

    ``n / (1 + 2 * sum rho(k))`` with the sum truncated by Geyer's
    initial-positive-sequence rule, clamped to ``[1, n]``. ``x`` is only
    checked for ordering; lags are counted in observations.
    """
    r = np.asarray(residuals, dtype=float)
    n = r.size
    if n < 10:
        raise DomainError("need at least 10 residuals")
    if x is not None and np.any(np.diff(np.asarray(x, dtype=float)) <= 0):
        raise DomainError("x must be strictly increasing")
    if np.ptp(r) == 0:
        return 1.0
    rho = autocorrelation(r / np.max(np.abs(r)))
    total = 0.0
    for m in range((n - 1) // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        total += pair
    tau = 2.0 * total - 1.0
    if tau <= 0:
        return float(n)
    # rescaling the input perturbs the last bits; 10 significant digits hide that
    return float(f"{min(max(n / tau, 1.0), n):.10g}")


def kernel_effective_sample_size(kernel, x):
    """Effective sample size of the mean under a fitted kernel, ``n**2 / (1' R 1)``.

    ``R`` is the correlation matrix implied by ``kernel`` (nugget included).
    """
    x = np.asarray(x, dtype=float)
    K = kernel.cov(x)
    R = K / (kernel.s2 + kernel.nugget)
    n = x.size
    return float(min(max(n * n / R.sum(), 1.0), n))


# ---------------------------------------------------------------------------
# generalized least squares
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GLSResult:
    coef: np.ndarray
    cov: np.ndarray
    kernel: SqExpKernel
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    log_likelihood: float


def gls_solve(X, y, K):
    """``(X' K^-1 X)^-1 X' K^-1 y`` and its covariance."""
    X = np.asarray(X, dtype=float)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise StructuralError("design matrix is rank deficient")
    L, _ = robust_cholesky(K)
    A = linalg.solve_triangular(L, X, lower=True, check_finite=False)
    b = linalg.solve_triangular(L, y, lower=True, check_finite=False)
    Q, R = np.linalg.qr(A)
    coef = linalg.solve_triangular(R, Q.T @ b)
    Rinv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    return coef, Rinv @ Rinv.T


def gls_fit(data, design, kernel=None, alpha=0.05, n_starts=8):
    """Generalized least squares with a squared-exponential error covariance.

    Parameters
    ----------
    design : callable or array
        ``design(x)`` returning the ``(n, p)`` design matrix, or the matrix.
    kernel : SqExpKernel, optional
        If given, used as-is. Otherwise hyperparameters are chosen by
        maximizing the profile likelihood (coefficients at their GLS value).
    """
    X = design(data.x) if callable(design) else np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise StructuralError("design matrix is rank deficient")
    y = data.y

    def profile(k):
        K = k.cov(data.x)
        coef, _ = gls_solve(X, y, K)
        return log_marginal_likelihood(y - X @ coef, data.x, k)

    if kernel is None:
        coef0, *_ = np.linalg.lstsq(X, y, rcond=None)
        bounds, v, dx, span = _hyper_bounds(y - X @ coef0, data.x)

        def nll(p):
            try:
                return -profile(SqExpKernel(*np.exp(p)))
            except (ConditioningError, StructuralError):
                return 1e300

        best = None
        for ls in np.geomspace(max(2 * dx, span / 50), span, 4):
            for s2 in (v, 10 * v):
                p0 = [math.log(s2), math.log(ls), math.log(v * 1e-4)]
                res = optimize.minimize(
                    nll, p0, method="Nelder-Mead", bounds=bounds,
                    options={"maxiter": 3000, "xatol": 1e-6, "fatol": 1e-9, "adaptive": True},
                )
                if best is None or res.fun < best.fun:
                    best = res
            if n_starts <= 2:
                break
        kernel = SqExpKernel(*np.exp(best.x))

    coef, cov = gls_solve(X, y, kernel.cov(data.x))
    q = stats.norm.ppf(1 - alpha / 2)
    se = np.sqrt(np.diag(cov))
    return GLSResult(coef, cov, kernel, coef - q * se, coef + q * se, profile(kernel))
