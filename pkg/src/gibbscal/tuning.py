"""Choosing the loss scale by bootstrap-estimated frequentist coverage.

Three ways of generating pseudo-data are provided:

``prior``
    draw the parameter from its prior and a discrepancy from the assumed
    discrepancy prior, and check whether the Gibbs interval from the
    pseudo-data covers the drawn parameter;
``map``
    fix a point estimate from the observed data, generate pseudo-data
    around it and check whether the pseudo-data point estimates fall inside
    the interval from the observed data;
``block``
    resample blocks of empirical residuals around the loss minimizer and
    check coverage of the minimizer.

The resulting coverage curve is smoothed and inverted by
:func:`select_loss_scale`.
"""

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, optimize

from . import rng as rngmod
from .errors import CalibrationError, ConfigurationError, TuningError
from .sampler import credible_interval, laplace_interval, map_estimate, posterior_mode, sample_gibbs

log = logging.getLogger(__name__)

VARIANTS = ("prior", "map", "block")


def default_w_grid(n=35, lo=1e-3, hi=10.0):
    return tuple(np.geomspace(lo, hi, n))


@dataclass(frozen=True)
class BootstrapConfig:
    """Settings for a coverage-curve run.

    ``interval`` selects how each replicate's credible interval is formed:
    ``"mcmc"`` runs :func:`~gibbscal.sampler.sample_gibbs` with ``n_iter`` /
    ``n_burn``; ``"laplace"`` uses a Gaussian approximation at the mode.
    """

    B: int = 100
    w_grid: tuple = field(default_factory=default_w_grid)
    alpha: float = 0.1
    variant: str = "prior"
    block_length: float = None
    seed: int = 0
    interval: str = "mcmc"
    n_iter: int = 4000
    n_burn: int = 1000
    n_jobs: int = 1
    max_failure_fraction: float = 0.2

    def __post_init__(self):
        grid = tuple(float(w) for w in self.w_grid)
        object.__setattr__(self, "w_grid", grid)
        if self.B < 20:
            raise ConfigurationError(f"B must be at least 20, got {self.B}")
        if not grid:
            raise ConfigurationError("w_grid is empty")
        if any(w <= 0 for w in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("w_grid must be strictly increasing and positive")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.interval not in ("mcmc", "laplace"):
            raise ConfigurationError(f"interval must be 'mcmc' or 'laplace', got {self.interval!r}")
        if self.variant == "block" and not (self.block_length and self.block_length > 0):
            raise ConfigurationError("block variant needs a positive block_length")


@dataclass(frozen=True, eq=False)
class CoverageCurve:
    w: np.ndarray
    coverage: np.ndarray
    stderr: np.ndarray
    B: int
    alpha: float
    n_failed: int = 0
    variant: str = "prior"

    @property
    def target(self):
        return 1.0 - self.alpha

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["w", "coverage", "stderr", "B"])
            for w, c, s in zip(self.w, self.coverage, self.stderr):
                wr.writerow([repr(float(w)), repr(float(c)), repr(float(s)), self.B])

    @classmethod
    def from_points(cls, w, coverage, B, alpha, **kw):
        c = np.asarray(coverage, dtype=float)
        return cls(np.asarray(w, dtype=float), c, np.sqrt(c * (1 - c) / B), B, alpha, **kw)


# ---------------------------------------------------------------------------
# replicate machinery
# ---------------------------------------------------------------------------


def _replicate_seed(cfg, b, w):
    return int(rngmod.stream(cfg.seed, 1, b, rngmod.float_key(w)).integers(2**63))


def _interval(post, cfg, b, start):
    """Credible interval for one replicate at one loss scale, plus the mode used as the next start."""
    if cfg.interval == "laplace":
        return laplace_interval(post, cfg.alpha, start=start)
    s = sample_gibbs(post, cfg.n_iter, cfg.n_burn, seed=_replicate_seed(cfg, b, post.w), init=start)
    return credible_interval(s, cfg.alpha), start


def _prior_replicate(args):
    post0, disc, cfg, b = args
    rng = rngmod.stream(cfg.seed, 0, b)
    k = post0.dim_physical
    theta_b = post0.prior.head(k).sample(rng)
    x = post0.data.x
    y = post0.model.predict(x, theta_b) + disc.sample(x, rng)
    rep = post0.with_data(post0.data.with_y(y, id=f"{post0.data.id}#b{b}"))
    start = map_estimate(rep.with_scale(1.0), restarts=1, seed=_replicate_seed(cfg, b, 0.0), flat=True)
    hits = []
    for w in cfg.w_grid:
        ci, start = _interval(rep.with_scale(w), cfg, b, start)
        hits.append(float(np.mean(ci.contains(theta_b))))
    return hits


def _map_replicate(args):
    post0, disc, cfg, b, theta_hat, intervals = args
    rng = rngmod.stream(cfg.seed, 0, b)
    k = post0.dim_physical
    x = post0.data.x
    y = post0.model.predict(x, theta_hat[:k]) + disc.sample(x, rng)
    rep = post0.with_data(post0.data.with_y(y, id=f"{post0.data.id}#b{b}"))
    start = map_estimate(rep.with_scale(1.0), restarts=2, seed=_replicate_seed(cfg, b, 0.0), start=theta_hat, flat=True)
    hits = []
    for w, (lo, hi) in zip(cfg.w_grid, intervals):
        start = posterior_mode(rep.with_scale(w), start)
        est = start[:k]
        hits.append(float(np.mean((lo[:k] <= est) & (est <= hi[:k]))))
    return hits


def _block_replicate(args):
    post0, cfg, b, theta_hat, resid = args
    rng = rngmod.stream(cfg.seed, 0, b)
    k = post0.dim_physical
    x = post0.data.x
    y = post0.model.predict(x, theta_hat[:k]) + block_resample(resid, x, cfg.block_length, rng)
    rep = post0.with_data(post0.data.with_y(y, id=f"{post0.data.id}#b{b}"))
    start = theta_hat
    hits = []
    for w in cfg.w_grid:
        ci, start = _interval(rep.with_scale(w), cfg, b, start)
        hits.append(float(np.mean(ci.contains(theta_hat[:k]))))
    return hits


_REPLICATE = {"prior": _prior_replicate, "map": _map_replicate, "block": _block_replicate}


def _safe_replicate(task):
    # module level so worker processes can unpickle it
    variant, args = task
    try:
        return _REPLICATE[variant](args)
    except (CalibrationError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        log.debug("replicate failed: %s", exc)
        return None


def _run(variant, jobs, n_jobs):
    tasks = [(variant, j) for j in jobs]
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(_safe_replicate, tasks, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    return [_safe_replicate(t) for t in tasks]


def _curve(results, cfg):
    ok = [r for r in results if r is not None]
    n_failed = len(results) - len(ok)
    if n_failed > cfg.max_failure_fraction * len(results):
        raise TuningError(f"{n_failed} of {len(results)} bootstrap replicates failed")
    if n_failed:
        log.warning("%d of %d bootstrap replicates failed and were excluded", n_failed, len(results))
    cov = np.mean(np.array(ok), axis=0)
    B = len(ok)
    return CoverageCurve(
        np.array(cfg.w_grid), cov, np.sqrt(cov * (1 - cov) / B), B, cfg.alpha, n_failed, cfg.variant
    )


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def parametric_bootstrap_coverage(post, disc, cfg):
    """Coverage curve from pseudo-data drawn under the prior.

    For each replicate ``b`` the physical parameter is drawn from the prior,
    ``y_b = eta(x; theta_b) + delta_b`` with ``delta_b`` drawn from ``disc``
    (which includes measurement noise), and the indicator that the Gibbs
    interval at each ``w`` contains ``theta_b`` is recorded. For several
    physical coordinates the per-coordinate indicators are averaged.
    ``post.w`` is ignored.
    """
    jobs = [(post, disc, cfg, b) for b in range(cfg.B)]
    return _curve(_run("prior", jobs, cfg.n_jobs), cfg)


def parametric_bootstrap_map_variant(post, disc, cfg):
    """Coverage of pseudo-data point estimates by the observed-data interval.

    The loss minimizer from the observed data generates every replicate;
    the replicate's posterior mode at scale ``w`` is checked against the
    observed-data interval at the same ``w``.
    """
    theta_hat = map_estimate(post.with_scale(1.0), restarts=4, seed=cfg.seed, flat=True)
    intervals = []
    start = theta_hat
    for w in cfg.w_grid:
        ci, start = _interval(post.with_scale(w), cfg, cfg.B, start)
        intervals.append((ci.lo, ci.hi))
    jobs = [(post, disc, cfg, b, theta_hat, intervals) for b in range(cfg.B)]
    return _curve(_run("map", jobs, cfg.n_jobs), cfg)


def block_partition(x, block_length):
    """Block index of every point for contiguous blocks of (roughly) ``block_length`` in x.

    Each point is taken to own a cell of one mean spacing, so blocks of one
    spacing hold single points and a block as long as the data holds them all.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    spacing = (x[-1] - x[0]) / (n - 1)
    extent = spacing * n
    n_blocks = max(1, int(round(extent / block_length)))
    width = extent / n_blocks
    ids = np.floor((x - x[0] + 0.5 * spacing) / width).astype(int)
    return np.clip(ids, 0, n_blocks - 1), n_blocks


def block_resample(values, x, block_length, rng):
    """Resample contiguous blocks of ``values`` with replacement, keeping order within blocks.

    Blocks are concatenated until ``len(values)`` entries exist; the result
    is truncated to that length.
    """
    values = np.asarray(values, dtype=float)
    ids, n_blocks = block_partition(x, block_length)
    blocks = [values[ids == k] for k in range(n_blocks)]
    blocks = [blk for blk in blocks if blk.size]
    out = []
    total = 0
    while total < values.size:
        blk = blocks[rng.integers(len(blocks))]
        out.append(blk)
        total += blk.size
    return np.concatenate(out)[: values.size]


def nonparametric_block_bootstrap(post, cfg):
    """Coverage of the loss minimizer by intervals from block-resampled residual pseudo-data."""
    if cfg.block_length is None:
        raise ConfigurationError("block_length is required")
    _, n_blocks = block_partition(post.data.x, cfg.block_length)
    if n_blocks < 4:
        raise ConfigurationError(f"block_length gives {n_blocks} blocks; at least 4 are needed")
    theta_hat = map_estimate(post.with_scale(1.0), restarts=4, seed=cfg.seed, flat=True)
    resid = post.data.y - post.model.predict(post.data.x, theta_hat[: post.dim_physical])
    jobs = [(post, cfg, b, theta_hat, resid) for b in range(cfg.B)]
    return _curve(_run("block", jobs, cfg.n_jobs), cfg)


def coverage_curve(post, disc, cfg):
    """Dispatch on ``cfg.variant``."""
    if cfg.variant == "prior":
        return parametric_bootstrap_coverage(post, disc, cfg)
    if cfg.variant == "map":
        return parametric_bootstrap_map_variant(post, disc, cfg)
    return nonparametric_block_bootstrap(post, cfg)


def _isotonic_decreasing(c, weights):
    res = optimize.isotonic_regression(c, weights=weights, increasing=False)
    return res.x


def smoothed_coverage(curve):
    """Monotone (non-increasing in ``w``) fit of the coverage estimates.

    Weighted isotonic regression with weights ``1 / SE``; the standard error
    of an estimate at 0 or 1 is evaluated at ``(B c + 0.5) / (B + 1)`` so
    that every weight is finite.
    """
    c = np.asarray(curve.coverage, dtype=float)
    B = curve.B
    p = (B * c + 0.5) / (B + 1)
    se = np.sqrt(p * (1 - p) / B)
    return _isotonic_decreasing(c, 1.0 / se)


def select_loss_scale(curve, target=None, policy="spline"):
    """Loss scale whose estimated coverage equals ``target`` (default ``1 - alpha``).

    ``policy="spline"``
        Fit a monotone cubic (PCHIP) interpolant in ``log w`` through the
        isotonic fit of the coverage estimates and return the largest ``w``
        with fitted coverage equal to the target, found by bisection.
    ``policy="grid"``
        Return the largest grid value reached before the raw coverage first
        drops below the target.

    Either way the result lies inside the grid. When the curve never falls
    below the target the largest grid value is returned; when it starts
    below the target a :class:`TuningError` is raised.
    """
    t = curve.target if target is None else float(target)
    w = np.asarray(curve.w, dtype=float)
    if policy == "grid":
        below = np.nonzero(np.asarray(curve.coverage) < t)[0]
        if below.size == 0:
            return float(w[-1])
        if below[0] == 0:
            raise TuningError("coverage is below target at the smallest w; extend the grid toward 0")
        return float(w[below[0] - 1])
    if policy != "spline":
        raise ConfigurationError(f"unknown policy {policy!r}")

    fit = smoothed_coverage(curve)
    # pooling averages in the isotonic fit leave round-off of a few ulps
    tol = 1e-12
    above = np.nonzero(fit >= t - tol)[0]
    if above.size == 0:
        raise TuningError("coverage is below target across the grid; extend the grid toward smaller w")
    i = above[-1]
    if i == w.size - 1:
        return float(w[-1])
    if fit[i] <= t + tol or w.size < 2:
        return float(w[i])
    u = np.log(w)
    spline = interpolate.PchipInterpolator(u, fit)
    root = optimize.brentq(lambda s: float(spline(s)) - t, u[i], u[i + 1], xtol=1e-12)
    return float(np.exp(root))
