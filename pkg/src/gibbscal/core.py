"""Data containers, forward models, priors and loss functions.

Everything here is immutable after construction and free of hidden state, so
objects can be shared between threads and pickled into worker processes.
"""

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .errors import DomainError, StructuralError

LOG_2PI = math.log(2.0 * math.pi)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentData:
    """Observations ``y`` at strictly increasing control inputs ``x``."""

    x: np.ndarray
    y: np.ndarray
    id: str = "experiment"

    def __post_init__(self):
        x = _frozen(self.x).ravel()
        y = _frozen(self.y).ravel()
        if x.shape != y.shape:
            raise StructuralError(f"x has {x.size} values but y has {y.size}")
        if x.size < 2:
            raise StructuralError("need at least two observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DomainError("x and y must be finite")
        if np.any(np.diff(x) <= 0):
            raise DomainError("x must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.x.size

    def with_y(self, y, id=None):
        """Same design points, new responses."""
        return ExperimentData(self.x, y, self.id if id is None else id)

    @classmethod
    def from_csv(cls, path, id=None):
        """Read a ``x,y`` CSV file (header required)."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            fields = [f.strip() for f in (reader.fieldnames or [])]
            if "x" not in fields or "y" not in fields:
                raise StructuralError(f"{path}: header must contain columns 'x' and 'y', got {fields}")
            reader.fieldnames = fields
            xs, ys = [], []
            for lineno, row in enumerate(reader, start=2):
                try:
                    xs.append(float(row["x"]))
                    ys.append(float(row["y"]))
                except (TypeError, ValueError) as exc:
                    raise StructuralError(f"{path}:{lineno}: unparseable row {row}") from exc
        if id is None:
            id = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
        return cls(np.array(xs), np.array(ys), id)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for xi, yi in zip(self.x, self.y):
                w.writerow([repr(float(xi)), repr(float(yi))])


# ---------------------------------------------------------------------------
# Forward models
# ---------------------------------------------------------------------------


class ForwardModel:
    """Deterministic map ``(x, theta) -> prediction``.

    Subclasses set ``theta_bounds`` (a sequence of ``(lo, hi)`` pairs, one per
    coordinate; infinite ends allowed) and implement :meth:`eval`.
    """

    theta_bounds: Sequence = ()
    param_names: Sequence = ()

    @property
    def dim_theta(self):
        return len(self.theta_bounds)

    def names(self):
        if self.param_names:
            return list(self.param_names)
        return [f"theta{i}" for i in range(self.dim_theta)]

    def eval(self, x, theta):
        raise NotImplementedError

    def __call__(self, x, theta):
        return self.predict(x, theta)

    def predict(self, x, theta):
        """``eval`` with shape checks."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim_theta,):
            raise StructuralError(f"expected theta of length {self.dim_theta}, got shape {theta.shape}")
        out = np.asarray(self.eval(x, theta), dtype=float)
        if out.shape != np.shape(x):
            raise StructuralError(f"model returned shape {out.shape} for x of shape {np.shape(x)}")
        return out

    def in_bounds(self, theta):
        return all(lo <= t <= hi for t, (lo, hi) in zip(theta, self.theta_bounds))


@dataclass(frozen=True)
class FunctionModel(ForwardModel):
    """Wrap a plain function ``f(x, theta)``.

    ``f`` must be a module-level callable if the model is to be sent to
    worker processes.
    """

    func: Callable
    theta_bounds: tuple
    param_names: tuple = ()

    def eval(self, x, theta):
        return self.func(x, theta)


@dataclass(frozen=True)
class LinearModel(ForwardModel):
    """``eta(x; theta) = sum_j theta_j * x**powers[j]``."""

    powers: tuple = (1,)
    theta_bounds: tuple = ((-np.inf, np.inf),)
    param_names: tuple = ()

    def __post_init__(self):
        if len(self.powers) != len(self.theta_bounds):
            raise StructuralError("one bound pair per basis function required")

    def design(self, x):
        x = np.asarray(x, dtype=float)
        return np.column_stack([x**p for p in self.powers])

    def eval(self, x, theta):
        return self.design(x) @ theta


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"Uniform requires lo < hi, got ({self.lo}, {self.hi})")

    @property
    def support(self):
        return (self.lo, self.hi)

    def logpdf(self, t):
        if self.lo <= t <= self.hi:
            return -math.log(self.hi - self.lo)
        return -math.inf

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def dist(self):
        return stats.uniform(self.lo, self.hi - self.lo)


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DomainError(f"Normal requires sd > 0, got {self.sd}")

    @property
    def support(self):
        return (-math.inf, math.inf)

    def logpdf(self, t):
        z = (t - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * LOG_2PI

    def sample(self, rng, size=None):
        return rng.normal(self.mean, self.sd, size)

    def dist(self):
        return stats.norm(self.mean, self.sd)


@dataclass(frozen=True)
class InverseGamma:
    """Inverse gamma with density ``b^a / Gamma(a) t^(-a-1) exp(-b/t)``."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError(f"InverseGamma requires shape, scale > 0, got ({self.shape}, {self.scale})")
        object.__setattr__(self, "_const", self.shape * math.log(self.scale) - special.gammaln(self.shape))

    @property
    def support(self):
        return (0.0, math.inf)

    def logpdf(self, t):
        if t <= 0:
            return -math.inf
        return self._const - (self.shape + 1.0) * math.log(t) - self.scale / t

    def sample(self, rng, size=None):
        # log-space draw, G(a) = G(a + 1) * U**(1/a), so tiny shapes do not underflow to 0
        log_g = np.log(rng.gamma(self.shape + 1.0, 1.0, size)) + np.log(rng.random(size)) / self.shape
        out = self.scale * np.exp(np.clip(-log_g, -700.0, 700.0))
        return float(out) if size is None else out

    def dist(self):
        return stats.invgamma(self.shape, scale=self.scale)


@dataclass(frozen=True)
class ParameterPrior:
    """Independent product prior over parameter coordinates."""

    marginals: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if not self.marginals:
            raise StructuralError("prior needs at least one coordinate")

    @property
    def dim(self):
        return len(self.marginals)

    def log_density(self, theta):
        if len(theta) != self.dim:
            raise StructuralError(f"prior has {self.dim} coordinates, theta has {len(theta)}")
        total = 0.0
        for m, t in zip(self.marginals, theta):
            lp = m.logpdf(float(t))
            if lp == -math.inf:
                return -math.inf
            total += lp
        return total

    def sample(self, rng, size=None):
        """One draw (shape ``(dim,)``) or ``size`` draws (shape ``(size, dim)``)."""
        if size is None:
            return np.array([m.sample(rng) for m in self.marginals])
        return np.column_stack([m.sample(rng, size) for m in self.marginals])

    def bounds(self):
        return [m.support for m in self.marginals]

    def head(self, k):
        """Prior over the first ``k`` coordinates."""
        return ParameterPrior(self.marginals[:k])


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def trapezoid_weights(x):
    """Weights ``w`` with ``sum(w * f) == trapezoid(f, x)``."""
    x = np.asarray(x, dtype=float)
    w = np.empty_like(x)
    dx = np.diff(x)
    w[0] = dx[0] / 2
    w[-1] = dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return w


def _residuals(data, model, theta, offset=None):
    pred = model.predict(data.x, theta)
    if pred.shape != data.y.shape:
        raise StructuralError(f"model output length {pred.size} != data length {data.n}")
    r = data.y - pred
    if offset is not None:
        r = r - offset
    return r


def l2_loss(data, model, theta, quadrature="sum", offset=None):
    """Squared-error loss between data and model prediction.

    Parameters
    ----------
    quadrature : {"sum", "trapezoid"}
        ``"sum"`` adds squared residuals; ``"trapezoid"`` weights them with
        trapezoid-rule weights over ``x`` so the loss approximates the
        integral of the squared residual curve.
    offset : array, optional
        Expected discrepancy, subtracted from the residuals. With
        ``offset = E[delta]`` the loss compares ``y`` against the expected
        true process ``eta + E[delta]``.
    """
    r = _residuals(data, model, theta, offset)
    if quadrature == "sum":
        return float(r @ r)
    if quadrature == "trapezoid":
        return float(trapezoid_weights(data.x) @ (r * r))
    raise ValueError(f"unknown quadrature {quadrature!r}")


def gaussian_nll_loss(data, model, theta, sigma2, offset=None):
    """Gaussian negative log-likelihood with variance ``sigma2``."""
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    r = _residuals(data, model, theta, offset)
    with np.errstate(over="ignore"):
        # a vanishing variance gives an infinite loss
        return 0.5 * data.n * (LOG_2PI + math.log(sigma2)) + float(r @ r) / (2.0 * sigma2)


@dataclass(frozen=True, eq=False)
class L2Loss:
    """Squared-error loss; no nuisance coordinate."""

    quadrature: str = "sum"
    offset: np.ndarray = None

    n_nuisance = 0

    def __post_init__(self):
        if self.quadrature not in ("sum", "trapezoid"):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        if self.offset is not None:
            object.__setattr__(self, "offset", _frozen(self.offset))

    def __call__(self, data, model, params):
        return l2_loss(data, model, params, self.quadrature, self.offset)


@dataclass(frozen=True, eq=False)
class GaussianNLL:
    """Gaussian negative log-likelihood; the last parameter is ``sigma2``."""

    offset: np.ndarray = None

    n_nuisance = 1

    def __post_init__(self):
        if self.offset is not None:
            object.__setattr__(self, "offset", _frozen(self.offset))

    def __call__(self, data, model, params):
        sigma2 = params[-1]
        if not sigma2 > 0:
            return math.inf
        return gaussian_nll_loss(data, model, params[:-1], sigma2, self.offset)


def profiled_gaussian_nll(data, model, theta):
    """Gaussian NLL minimized over ``sigma2`` at fixed ``theta``."""
    r = _residuals(data, model, theta)
    s2 = float(r @ r) / data.n
    return 0.5 * data.n * (LOG_2PI + math.log(s2) + 1.0), s2
