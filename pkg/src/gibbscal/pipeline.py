"""Per-experiment calibration: fit, discrepancy, loss-scale selection, posterior."""

import logging
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .gp import GPDiscrepancy, effective_sample_size, empirical_discrepancy, fit_gp_mle
from .sampler import credible_interval, map_estimate, sample_gibbs
from .tuning import coverage_curve, select_loss_scale
from .wasp import gaussianize

log = logging.getLogger(__name__)

EMPIRICAL = "empirical"


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Everything produced for one experiment.

    ``posteriors`` maps a scale-selection method (``"bootstrap"``, ``"ess"``
    or ``"fixed"``) to its :class:`~gibbscal.sampler.PosteriorSample`;
    ``scales`` maps the same keys to the loss scale used.
    """

    id: str
    theta_hat: np.ndarray
    residuals: np.ndarray
    kernel: object
    curve: object
    n_eff: float
    scales: dict
    posteriors: dict
    intervals: dict

    def summary(self, method):
        return gaussianize(self.posteriors[method], id=self.id)


def calibrate_experiment(
    post,
    discrepancy=EMPIRICAL,
    tuning=None,
    methods=("bootstrap", "ess"),
    policy="spline",
    n_iter=4000,
    n_burn=1000,
    seed=0,
    fixed_w=1.0,
    alpha=None,
):
    """Calibrate one experiment end to end.

    Parameters
    ----------
    post : GibbsPosterior
        Posterior for the experiment; its ``w`` is ignored.
    discrepancy : discrepancy prior or ``"empirical"``
        ``"empirical"`` fits a squared-exponential GP by maximum likelihood
        to the residuals at the loss minimizer and uses it (noise-free) as
        the discrepancy prior for the bootstrap.
    tuning : BootstrapConfig
        Needed when ``"bootstrap"`` is among ``methods``.
    methods : iterable of {"bootstrap", "ess", "fixed"}
        Loss-scale rules to run. ``"ess"`` uses ``n_e / n`` with ``n_e``
        from the residual autocorrelation; ``"fixed"`` uses ``fixed_w``.
    alpha : float, optional
        Level of the reported intervals; defaults to ``tuning.alpha``.
    """
    data, model = post.data, post.model
    k = post.dim_physical
    if alpha is None:
        alpha = tuning.alpha if tuning is not None else 0.1
    theta_hat = map_estimate(post.with_scale(1.0), restarts=4, seed=seed, flat=True)
    resid = empirical_discrepancy(data, model, theta_hat[:k])

    kernel = None
    if "bootstrap" in methods:
        if isinstance(discrepancy, str) and discrepancy == EMPIRICAL:
            kernel = fit_gp_mle(resid, data.x)
            discrepancy = GPDiscrepancy(kernel)
        else:
            kernel = getattr(discrepancy, "kernel", None)

    n_eff = effective_sample_size(resid, data.x)
    scales, curve = {}, None
    for method in methods:
        if method == "bootstrap":
            curve = coverage_curve(post, discrepancy, tuning)
            scales[method] = select_loss_scale(curve, policy=policy)
        elif method == "ess":
            scales[method] = n_eff / data.n
        elif method == "fixed":
            scales[method] = float(fixed_w)
        else:
            raise ValueError(f"unknown scale-selection method {method!r}")

    posteriors, intervals = {}, {}
    for i, method in enumerate(methods):
        chain_seed = int(rngmod.stream(seed, 2, i).integers(2**63))
        s = sample_gibbs(post.with_scale(scales[method]), n_iter, n_burn, seed=chain_seed, init=theta_hat)
        posteriors[method] = s
        intervals[method] = credible_interval(s, alpha)
        log.info("%s: %s w=%.4g acceptance=%.2f", data.id, method, scales[method], s.acceptance_rate)
    return ExperimentResult(data.id, theta_hat, resid, kernel, curve, n_eff, scales, posteriors, intervals)
