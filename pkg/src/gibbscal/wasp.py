"""Consensus posteriors from subset posteriors via Gaussian Wasserstein barycenters."""

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConditioningError, StructuralError

EIG_FLOOR = 1e-12
WITHIN = "within"
ACROSS = "across"


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray
    n_draws: int = 0
    id: str = ""
    names: tuple = ()

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise StructuralError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(cov))):
            raise StructuralError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise ConditioningError("covariance is not positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def dim(self):
        return self.mean.size

    def interval(self, alpha):
        q = stats.norm.ppf(1 - alpha / 2)
        sd = np.sqrt(np.diag(self.cov))
        return self.mean - q * sd, self.mean + q * sd

    def to_dict(self):
        return {
            "id": self.id,
            "names": list(self.names),
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "n_draws": int(self.n_draws),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"]), np.array(d["cov"]), int(d.get("n_draws", 0)), d.get("id", ""), tuple(d.get("names", ())))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True, eq=False)
class ConsensusPosterior:
    mean: np.ndarray
    cov: np.ndarray
    scaling: str
    iterations: int
    converged: bool
    names: tuple = ()

    def interval(self, alpha):
        q = stats.norm.ppf(1 - alpha / 2)
        sd = np.sqrt(np.diag(self.cov))
        return self.mean - q * sd, self.mean + q * sd

    def to_dict(self):
        return {
            "names": list(self.names),
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "scaling": self.scaling,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"]), np.array(d["cov"]), d["scaling"], d["iterations"], d["converged"], tuple(d.get("names", ())))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def sqrtm_psd(A):
    """Symmetric square root and inverse square root by eigendecomposition."""
    evals, evecs = np.linalg.eigh(0.5 * (A + A.T))
    if np.min(evals) < EIG_FLOOR:
        raise ConditioningError(f"eigenvalue {np.min(evals):.3g} below {EIG_FLOOR}")
    r = np.sqrt(evals)
    return (evecs * r) @ evecs.T, (evecs / r) @ evecs.T


def _fixed_point_step(S, covs):
    root, inv_root = sqrtm_psd(S)
    avg = sum(sqrtm_psd(root @ C @ root)[0] for C in covs) / len(covs)
    new = inv_root @ avg @ avg @ inv_root
    return 0.5 * (new + new.T)


def barycenter_covariance(covs, tol=1e-10, max_iter=500):
    """Covariance of the Wasserstein barycenter of mean-zero Gaussians.

    Iterates ``S <- S^-1/2 (mean_k (S^1/2 C_k S^1/2)^1/2)^2 S^-1/2`` from the
    identity until successive iterates differ by less than ``tol`` in
    Frobenius norm. Returns ``(S, iterations, converged)``.
    """
    covs = [np.atleast_2d(np.asarray(C, dtype=float)) for C in covs]
    if not covs:
        raise StructuralError("need at least one covariance")
    d = covs[0].shape[0]
    if any(C.shape != (d, d) for C in covs):
        raise StructuralError("covariances differ in dimension")
    for C in covs:
        sqrtm_psd(C)
    # canonical order makes the floating-point reductions order-free
    covs.sort(key=lambda C: tuple(C.ravel()))
    S = np.eye(d)
    for it in range(1, max_iter + 1):
        new = _fixed_point_step(S, covs)
        delta = np.linalg.norm(new - S, "fro")
        S = new
        if delta < tol:
            return S, it, True
    return S, max_iter, False


def fixed_point_residual(S, covs):
    """Frobenius distance between ``S`` and one fixed-point update of it."""
    return float(np.linalg.norm(_fixed_point_step(S, covs) - S, "fro"))


def consensus_mean(summaries):
    """Precision-weighted average of subset means."""
    if not summaries:
        raise StructuralError("need at least one summary")
    d = summaries[0].dim
    if any(s.dim != d for s in summaries):
        raise StructuralError("summaries differ in dimension")
    P = np.zeros((d, d))
    Pm = np.zeros(d)
    for s in sorted(summaries, key=lambda s: tuple(s.mean) + tuple(s.cov.ravel())):
        prec = np.linalg.inv(s.cov)
        P += prec
        Pm += prec @ s.mean
    if np.linalg.cond(P) > 1e14:
        raise ConditioningError("sum of subset precisions is singular")
    return np.linalg.solve(P, Pm)


def combine(summaries, scaling=WITHIN, tol=1e-10, max_iter=500):
    """Consensus posterior of ``K`` subset summaries.

    ``scaling="across"`` divides the barycenter covariance by ``K`` (pooling
    information across experiments); ``"within"`` leaves it as the
    covariance of a typical subset.
    """
    if scaling not in (WITHIN, ACROSS):
        raise ValueError(f"scaling must be {WITHIN!r} or {ACROSS!r}")
    mean = consensus_mean(summaries)
    S, iters, converged = barycenter_covariance([s.cov for s in summaries], tol, max_iter)
    if scaling == ACROSS:
        S = S / len(summaries)
    return ConsensusPosterior(mean, S, scaling, iters, converged, summaries[0].names)


def subset_loss_scale(w, K, power_k=False):
    """Loss scale for one of ``K`` equal subsets; ``power_k`` raises the subset likelihood to the power ``K``."""
    return w * K if power_k else w


def gaussianize(samples, id="", skew_warn=1.0, names=None):
    """Mean and unbiased covariance of posterior draws.

    ``samples`` is a :class:`~gibbscal.sampler.PosteriorSample` or an
    ``(m, d)`` array; a warning is issued when any marginal skewness exceeds
    ``skew_warn`` in absolute value.
    """
    if names is None:
        names = getattr(samples, "names", ())
    draws = getattr(samples, "draws", samples)
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    if draws.shape[0] < 100:
        raise ValueError(f"need at least 100 draws, got {draws.shape[0]}")
    mean = draws.mean(axis=0)
    cov = np.atleast_2d(np.cov(draws, rowvar=False, ddof=1))
    evals = np.linalg.eigvalsh(cov)
    if np.max(evals) <= 0 or np.min(evals) <= EIG_FLOOR * np.max(evals):
        raise ConditioningError("sample covariance is rank deficient")
    skew = stats.skew(draws, axis=0)
    if np.any(np.abs(skew) > skew_warn):
        warnings.warn(f"marginal skewness {np.round(skew, 2).tolist()} exceeds {skew_warn}; Gaussian summary may be poor", stacklevel=2)
    return GaussianSummary(mean, cov, draws.shape[0], id, tuple(names))
