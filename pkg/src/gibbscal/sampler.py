"""Sampling, optimizing and summarizing Gibbs posteriors.

The target density is ``p_w(params | y) ∝ exp(-w * loss(y, params)) * prior(params)``.
When the loss carries a nuisance variance (``GaussianNLL``) that coordinate
is handled internally on the log scale.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .core import InverseGamma
from . import rng as rngmod
from .errors import (
    ConfigurationError,
    InitializationError,
    OptimizationError,
    PrecisionError,
    StructuralError,
)

TARGET_ACCEPTANCE = 0.3
ADAPT_BATCH = 50


@dataclass(frozen=True, eq=False)
class GibbsPosterior:
    """Loss, prior, forward model, data and loss scale ``w``.

    Parameter vectors are the model's physical coordinates followed by the
    loss's nuisance coordinates (``sigma2`` for ``GaussianNLL``). The prior
    covers all of them.
    """

    data: object
    model: object
    loss: object
    prior: object
    w: float = 1.0

    def __post_init__(self):
        if not self.w >= 0:
            raise ConfigurationError(f"loss scale must be non-negative, got {self.w}")
        if self.prior.dim != self.dim:
            raise StructuralError(
                f"prior has {self.prior.dim} coordinates; model and loss need {self.dim}"
            )

    @property
    def dim_physical(self):
        return self.model.dim_theta

    @property
    def dim(self):
        return self.model.dim_theta + self.loss.n_nuisance

    def names(self):
        return self.model.names() + (["sigma2"] if self.loss.n_nuisance else [])

    def with_scale(self, w):
        return GibbsPosterior(self.data, self.model, self.loss, self.prior, w)

    def with_data(self, data):
        return GibbsPosterior(data, self.model, self.loss, self.prior, self.w)

    def loss_value(self, params):
        return self.loss(self.data, self.model, params)

    def log_density(self, params):
        """Unnormalized log density; ``-inf`` outside the prior support."""
        lp = self.prior.log_density(params)
        if lp == -math.inf or self.w == 0:
            return lp
        val = self.loss_value(params)
        if not math.isfinite(val):
            return -math.inf
        return lp - self.w * val

    # working coordinates: the nuisance variance is sampled as log(sigma2)

    def to_work(self, params):
        z = np.array(params, dtype=float)
        if self.loss.n_nuisance:
            z[-1] = math.log(z[-1]) if z[-1] > 0 else -math.inf
        return z

    def from_work(self, z):
        p = np.array(z, dtype=float)
        if self.loss.n_nuisance:
            # an overflowing variance becomes inf, which the prior rejects
            with np.errstate(over="ignore"):
                p[-1] = np.exp(p[-1])
        return p

    def log_density_work(self, z):
        """Log density of the working coordinates (includes the Jacobian)."""
        lp = self.log_density(self.from_work(z))
        if self.loss.n_nuisance and lp > -math.inf:
            lp += z[-1]
        return lp


@dataclass(frozen=True, eq=False)
class PosteriorSample:
    """Kept MCMC draws plus the information needed to reproduce them."""

    draws: np.ndarray
    accepted: np.ndarray
    w: float
    rng_seed: int
    n_iter: int
    n_burn: int
    names: tuple = ()

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted))

    @property
    def n_kept(self):
        return self.draws.shape[0]

    def to_csv(self, path):
        names = list(self.names) or [f"p{i}" for i in range(self.draws.shape[1])]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(names)
            for row in self.draws:
                wr.writerow([repr(float(v)) for v in row])

    def sidecar(self):
        return {
            "w": float(self.w),
            "seed": int(self.rng_seed),
            "acceptance_rate": self.acceptance_rate,
            "n_iter": int(self.n_iter),
            "n_burn": int(self.n_burn),
        }

    def write(self, csv_path, json_path):
        self.to_csv(csv_path)
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


@dataclass(frozen=True, eq=False)
class CredibleInterval:
    """Per-coordinate equal-tailed interval at level ``1 - alpha``."""

    lo: np.ndarray
    hi: np.ndarray
    alpha: float
    names: tuple = ()

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = theta.size
        return (self.lo[:k] <= theta) & (theta <= self.hi[:k])

    def as_dict(self):
        names = list(self.names) or [f"p{i}" for i in range(self.lo.size)]
        return {n: [float(a), float(b)] for n, a, b in zip(names, self.lo, self.hi)}


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------


def _work_bounds(post):
    bounds = []
    for i, (lo, hi) in enumerate(post.prior.bounds()):
        if post.loss.n_nuisance and i == post.dim - 1:
            bounds.append((None, None))
            continue
        bounds.append((lo if math.isfinite(lo) else None, hi if math.isfinite(hi) else None))
    return bounds


def _nelder_mead(fun, z0, bounds, maxiter, tol=1e-10):
    has_bounds = any(b != (None, None) for b in bounds)
    z0 = np.array(z0, dtype=float)
    if has_bounds:
        # keep the start strictly inside so the initial simplex is finite
        for i, (lo, hi) in enumerate(bounds):
            if lo is not None and hi is not None:
                pad = 1e-9 * (hi - lo)
                z0[i] = min(max(z0[i], lo + pad), hi - pad)
    return optimize.minimize(
        fun,
        z0,
        method="Nelder-Mead",
        bounds=bounds if has_bounds else None,
        options={"maxiter": maxiter, "xatol": tol, "fatol": tol, "adaptive": len(z0) > 2},
    )


def _best_prior_draw(post, rng, n=100):
    best, best_lp = None, -math.inf
    for _ in range(n):
        p = post.prior.sample(rng)
        lp = post.log_density(p)
        if lp > best_lp:
            best, best_lp = p, lp
    return best, best_lp


def _objective(post, flat):
    if not flat:
        def objective(z):
            v = -post.log_density(post.from_work(z))
            return v if math.isfinite(v) else 1e300
        return objective

    def objective(z):
        p = post.from_work(z)
        if post.prior.log_density(p) == -math.inf:
            return 1e300
        v = post.loss_value(p)
        return v if math.isfinite(v) else 1e300
    return objective


def map_estimate(post, restarts=4, seed=0, start=None, flat=False, return_result=False):
    """Minimize ``w * loss - log prior`` from several starts.

    Each start is polished by damped Newton, with Nelder-Mead as the
    fallback when Newton fails. Starts are ``start`` (if given), the best of 100 prior draws, then
    further prior draws. With ``flat=True`` the prior only restricts the
    support and the result is the loss minimizer.
    """
    rng = rngmod.stream(seed, 0)
    objective = _objective(post, flat)

    starts = []
    if start is not None:
        starts.append(post.to_work(start))
    p0, lp0 = _best_prior_draw(post, rng)
    if p0 is None:
        raise InitializationError("no prior draw gave a finite posterior density")
    starts.append(post.to_work(p0))
    while len(starts) < restarts:
        starts.append(post.to_work(post.prior.sample(rng)))

    bounds = _work_bounds(post)

    def strict(z):
        v = objective(z)
        return math.inf if v >= 1e300 else v

    best, diagnostics = None, []
    for z0 in starts:
        z = _newton_mode(strict, z0, max_iter=30)
        if z is not None:
            res = optimize.OptimizeResult(x=z, fun=strict(z), success=True, message="newton")
        else:
            res = _nelder_mead(objective, z0, bounds, maxiter=4000 * post.dim)
        ok = bool(res.success) and res.fun < 1e300
        diagnostics.append({"start": z0.tolist(), "fun": float(res.fun), "success": ok, "message": res.message})
        if ok and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise OptimizationError("all Nelder-Mead restarts failed", diagnostics)
    params = post.from_work(best.x)
    return (params, best) if return_result else params


def _fd_hessian(f, z, rel=1e-4):
    with np.errstate(invalid="ignore", over="ignore"):
        return _fd_hessian_raw(f, z, rel)


def _fd_hessian_raw(f, z, rel):
    d = z.size
    h = rel * np.maximum(1.0, np.abs(z))
    H = np.empty((d, d))
    f0 = f(z)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[i, i] = (f(z + ei) - 2 * f0 + f(z - ei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(z + ei + ej) - f(z + ei - ej) - f(z - ei + ej) + f(z - ei - ej)
            ) / (4 * h[i] * h[j])
    return H


def posterior_mode(post, start, flat=False):
    """Single Nelder-Mead run from ``start``; returns the mode as a parameter vector."""
    res = _nelder_mead(_objective(post, flat), post.to_work(start), _work_bounds(post), maxiter=2000 * post.dim, tol=1e-9)
    if res.fun >= 1e300:
        raise OptimizationError("mode search did not reach a finite objective", [{"message": res.message}])
    return post.from_work(res.x)


def _fd_grad_hess(f, z, f0, rel=1e-4):
    """Central-difference gradient and Hessian sharing function evaluations."""
    with np.errstate(invalid="ignore", over="ignore"):
        return _fd_grad_hess_raw(f, z, f0, rel)


def _fd_grad_hess_raw(f, z, f0, rel):
    d = z.size
    h = rel * np.maximum(1.0, np.abs(z))
    g = np.empty(d)
    H = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        fp, fm = f(z + ei), f(z - ei)
        g[i] = (fp - fm) / (2 * h[i])
        H[i, i] = (fp - 2 * f0 + fm) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(z + ei + ej) - f(z + ei - ej) - f(z - ei + ej) + f(z - ei - ej)
            ) / (4 * h[i] * h[j])
    return g, 0.5 * (H + H.T)


def _newton_mode(f, z0, max_iter=50):
    """Damped Newton with finite-difference derivatives.

    Negative curvature is flipped so every step is a descent direction.
    Returns the minimizer, or ``None`` when a non-finite value is met or
    the iteration stalls (the caller then falls back to Nelder-Mead).
    """
    z = np.array(z0, dtype=float)
    fz = f(z)
    if not math.isfinite(fz):
        return None
    for _ in range(max_iter):
        g, H = _fd_grad_hess(f, z, fz)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
            return None
        evals, evecs = np.linalg.eigh(H)
        evals = np.maximum(np.abs(evals), 1e-10 * max(1.0, float(np.max(np.abs(evals)))))
        step = -evecs @ ((evecs.T @ g) / evals)
        decrement = float(-g @ step)
        if decrement < 1e-12 and np.all(np.linalg.eigvalsh(H) > 0):
            return z
        t = 1.0
        while t > 1e-8:
            zn = z + t * step
            fn = f(zn)
            if math.isfinite(fn) and fn <= fz - 1e-4 * t * decrement:
                break
            t *= 0.5
        else:
            return None
        z, fz = zn, fn
    return None


def laplace_approximation(post, start=None, seed=0):
    """Gaussian approximation in working coordinates at the posterior mode.

    Returns ``(mode_work, cov_work)``. The mode is found by damped Newton
    from ``start`` (a parameter vector, the MAP estimate when omitted),
    falling back to Nelder-Mead when Newton fails, e.g. for a mode on a
    hard prior boundary.
    """
    if start is None:
        start = map_estimate(post, restarts=2, seed=seed)

    def negld(zz):
        return -post.log_density_work(zz)

    z = _newton_mode(negld, post.to_work(start))
    if z is None:
        def objective(zz):
            v = negld(zz)
            return v if math.isfinite(v) else 1e300

        res = _nelder_mead(objective, post.to_work(start), _work_bounds(post), maxiter=2000 * post.dim, tol=1e-9)
        if res.fun >= 1e300:
            raise OptimizationError("mode search did not reach a finite objective", [{"message": res.message}])
        z = res.x

    H = _fd_hessian(negld, z)
    if not np.all(np.isfinite(H)):
        # mode on a hard prior boundary: curvature of the tempered loss alone
        def negloss(zz):
            return post.w * post.loss_value(post.from_work(zz))

        H = _fd_hessian(negloss, z)
    H = 0.5 * (H + H.T)
    evals, evecs = np.linalg.eigh(H)
    floor = 1e-12 * max(1.0, float(np.max(np.abs(evals))))
    evals = np.maximum(evals, floor)
    cov = (evecs / evals) @ evecs.T
    return z, cov


def _variance_dof(post):
    """Degrees of freedom of the physical marginal once the Gaussian variance is integrated out.

    For a model linear in ``theta`` with ``k`` physical coordinates, loss
    ``w * NLL`` and an ``InverseGamma(a, b)`` variance prior, the physical
    marginal is Student-t with ``nu = 2a + w n - k`` and squared scale
    ``(nu + k) / nu`` times the Laplace variance. Returns ``None`` when the
    loss has no variance coordinate.
    """
    if not post.loss.n_nuisance or post.w <= 0:
        return None
    last = post.prior.marginals[-1]
    a = last.shape if isinstance(last, InverseGamma) else 0.0
    return 2.0 * a + post.w * post.data.n - post.dim_physical


def laplace_interval(post, alpha, start=None, seed=0):
    """Equal-tailed interval from the Laplace approximation, clipped to the prior support.

    With a Gaussian variance coordinate the physical coordinates use
    Student-t quantiles (see :func:`_variance_dof`) so that tempered
    posteriors with few effective observations get their heavy tails.
    """
    z, cov = laplace_approximation(post, start=start, seed=seed)
    sd = np.sqrt(np.diag(cov))
    q = np.full(z.size, stats.norm.ppf(1 - alpha / 2))
    nu = _variance_dof(post)
    if nu is not None:
        k = post.dim_physical
        q[:k] = stats.t.ppf(1 - alpha / 2, nu) * math.sqrt((nu + k) / nu) if nu > 0 else np.inf
    lo, hi = z - q * sd, z + q * sd
    if post.loss.n_nuisance:
        lo[-1], hi[-1] = np.exp(np.clip([lo[-1], hi[-1]], -700.0, 700.0))
    for i, (a, b) in enumerate(post.prior.bounds()):
        lo[i], hi[i] = max(lo[i], a), min(hi[i], b)
    return CredibleInterval(lo, hi, alpha, tuple(post.names())), post.from_work(z)


# ---------------------------------------------------------------------------
# MCMC
# ---------------------------------------------------------------------------


def _initial_point(post, rng, init):
    if init is not None:
        p = np.asarray(init, dtype=float)
        if math.isfinite(post.log_density(p)):
            return p
    try:
        return map_estimate(post, restarts=2, seed=int(rng.integers(2**63)))
    except (OptimizationError, InitializationError):
        pass
    p, lp = _best_prior_draw(post, rng)
    if p is None or not math.isfinite(lp):
        raise InitializationError("loss was non-finite at 100 prior draws")
    return p


def _default_proposal(post, z0):
    try:
        H = _fd_hessian(lambda zz: -post.log_density_work(zz), z0)
        H = 0.5 * (H + H.T)
        if np.all(np.isfinite(H)):
            evals, evecs = np.linalg.eigh(H)
            if np.all(evals > 0):
                return (evecs / evals) @ evecs.T
    except (ValueError, FloatingPointError, OverflowError):
        pass
    scales = []
    for m, zi in zip(post.prior.marginals, z0):
        sd = getattr(m, "sd", None)
        if sd is None and hasattr(m, "hi"):
            sd = (m.hi - m.lo) / math.sqrt(12)
        scales.append(0.1 * (sd if sd else max(1.0, abs(zi))))
    if post.loss.n_nuisance:
        scales[-1] = 0.5
    return np.diag(np.square(scales))


def sample_gibbs(post, n_iter=4000, n_burn=1000, step_sizes=None, seed=0, init=None):
    """Adaptive random-walk Metropolis on the Gibbs posterior.

    During burn-in the proposal is rescaled every 50 iterations toward a 0.3
    acceptance rate, and at the burn-in midpoint the proposal shape is reset
    to the empirical covariance of the draws so far. After burn-in the
    kernel is fixed, so the kept draws form an ordinary Metropolis chain.

    Parameters
    ----------
    step_sizes : sequence of float, optional
        Proposal standard deviations in working coordinates (``log sigma2``
        for the nuisance variance). Defaults to the inverse Hessian at the
        starting point.
    init : array, optional
        Starting parameter vector. Defaults to the MAP estimate, falling
        back to the best of 100 prior draws.
    """
    if not (n_iter > n_burn >= 0):
        raise ConfigurationError(f"need n_iter > n_burn >= 0, got {n_iter}, {n_burn}")
    for lo, hi in post.prior.bounds():
        if not lo < hi:
            raise ConfigurationError("prior support is empty")
    rng = rngmod.stream(seed, 1)
    d = post.dim

    z = post.to_work(_initial_point(post, rng, init))
    if step_sizes is not None:
        step_sizes = np.asarray(step_sizes, dtype=float)
        if step_sizes.shape != (d,) or np.any(step_sizes <= 0):
            raise ConfigurationError("step_sizes must be positive, one per coordinate")
        chol = np.diag(step_sizes)
        base_scale = 1.0
    else:
        chol = np.linalg.cholesky(_default_proposal(post, z))
        base_scale = 2.38 / math.sqrt(d)
    log_scale = math.log(base_scale)

    noise = rng.standard_normal((n_iter, d))
    log_u = np.log(rng.random(n_iter))
    lp = post.log_density_work(z)

    n_keep = n_iter - n_burn
    draws = np.empty((n_keep, d))
    accepted = np.zeros(n_keep, dtype=bool)
    burn_trace = np.empty((n_burn, d))
    batch_acc = 0
    scale = math.exp(log_scale)
    half = n_burn // 2

    for it in range(n_iter):
        prop = z + scale * (chol @ noise[it])
        lp_prop = post.log_density_work(prop)
        acc = lp_prop > -math.inf and log_u[it] < lp_prop - lp
        if acc:
            z, lp = prop, lp_prop
        if it < n_burn:
            burn_trace[it] = z
            batch_acc += acc
            if (it + 1) % ADAPT_BATCH == 0:
                rate = batch_acc / ADAPT_BATCH
                log_scale += (rate - TARGET_ACCEPTANCE) * 2.0 / math.sqrt((it + 1) / ADAPT_BATCH)
                scale = math.exp(log_scale)
                batch_acc = 0
            if it + 1 == half and half >= 20 * d and d > 1:
                emp = np.cov(burn_trace[half // 2 : half].T)
                try:
                    new = np.linalg.cholesky(emp + 1e-12 * np.trace(emp) * np.eye(d))
                except np.linalg.LinAlgError:
                    new = None
                if new is not None and np.all(np.isfinite(new)) and np.trace(emp) > 0:
                    chol = new
                    log_scale = math.log(2.38 / math.sqrt(d))
                    scale = math.exp(log_scale)
        else:
            k = it - n_burn
            draws[k] = z
            accepted[k] = acc

    if post.loss.n_nuisance:
        draws[:, -1] = np.exp(draws[:, -1])
    draws.setflags(write=False)
    return PosteriorSample(draws, accepted, post.w, seed, n_iter, n_burn, tuple(post.names()))


def credible_interval(samples, alpha):
    """Equal-tailed interval from empirical quantiles (linear interpolation).

    ``samples`` is a :class:`PosteriorSample` or an array of draws.
    """
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    names = ()
    if isinstance(samples, PosteriorSample):
        names = samples.names
        samples = samples.draws
    draws = np.asarray(samples, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    if draws.shape[0] < 100:
        raise PrecisionError(f"need at least 100 draws for an interval, got {draws.shape[0]}")
    lo, hi = np.quantile(draws, [alpha / 2, 1 - alpha / 2], axis=0)
    return CredibleInterval(lo, hi, alpha, tuple(names))
