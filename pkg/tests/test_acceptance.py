"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criterion 2 runs the full coverage table (four rows at 100 Monte-Carlo
iterations) and takes about half an hour on one core.
"""

import math
import shutil
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from gibbscal import checks, cli
from gibbscal.core import ExperimentData, GaussianNLL, InverseGamma, L2Loss, LinearModel, Normal, ParameterPrior
from gibbscal.experiments.simstudy import run_table
from gibbscal.experiments.toy import run_toy
from gibbscal.gp import NoDiscrepancy, effective_sample_size
from gibbscal.sampler import GibbsPosterior, sample_gibbs
from gibbscal.tuning import BootstrapConfig, parametric_bootstrap_coverage
from gibbscal.wasp import barycenter_covariance, fixed_point_residual

from oracles import batch_means_se, known_variance_posterior

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        return ok

    return emit


def test_criterion_1_toy(report):
    r = run_toy()
    m = r["methods"]
    failures = checks.toy_checks(r)
    detail = (
        f"MLE {np.round(m['MLE']['ci'], 3).tolist()}, GLS {np.round(m['GLS-KOH']['ci'], 3).tolist()}, "
        f"n_e {m['ESS-power']['n_eff']:.2f}, ESS-power {np.round(m['ESS-power']['ci'], 3).tolist()}, "
        f"Gibbs w {m['Gibbs-bootstrap']['w']:.2f} CI {np.round(m['Gibbs-bootstrap']['ci'], 3).tolist()}"
    )
    assert report(1, not failures, detail + ("" if not failures else " | " + "; ".join(failures))), failures


@pytest.mark.slow
def test_criterion_2_simulation_table(report):
    rows = run_table(n_mc=100, seed=0)
    failures = checks.table_checks({"rows": rows})
    detail = "; ".join(
        f"{r['method']} {r['autocorr']}: E_w {r['E_w']:.3f}, coverage {r['coverage']:.2f} (se {r['coverage_se']:.2f})"
        for r in rows
    )
    assert report(2, not failures, detail + ("" if not failures else " | " + "; ".join(failures))), failures


@pytest.mark.parametrize("alpha", [0.05, 0.1])
def test_criterion_3_coverage_identity(report, alpha):
    rng = np.random.default_rng(0)
    x = np.linspace(0.05, 2, 40)
    sigma = 0.2
    data = ExperimentData(x, 0.5 * x + rng.normal(0, sigma, x.size))
    prior = ParameterPrior((Normal(0.0, 1.0), InverseGamma(2.0, 0.05)))
    post = GibbsPosterior(data, LinearModel(), GaussianNLL(), prior)
    cfg = BootstrapConfig(B=200, w_grid=(1.0,), alpha=alpha, interval="mcmc", n_iter=3000, n_burn=1000, seed=11)
    curve = parametric_bootstrap_coverage(post, NoDiscrepancy(sigma), cfg)
    c = curve.coverage[0]
    se = math.sqrt(alpha * (1 - alpha) / curve.B)
    ok = abs(c - (1 - alpha)) <= 3 * se
    assert report(3, ok, f"alpha {alpha}: coverage {c:.3f} vs {1 - alpha} (3 SE = {3 * se:.3f}, failed {curve.n_failed})")


def test_criterion_4_sampler_oracles(report):
    rng = np.random.default_rng(1)
    x = np.linspace(0.1, 2, 30)
    data = ExperimentData(x, 0.8 * x + rng.normal(0, 0.3, x.size))
    prior = ParameterPrior((Normal(1.0, 2.0),))

    s0 = sample_gibbs(GibbsPosterior(data, LinearModel(), L2Loss(), prior, w=0.0), 42_000, 2000, seed=5)
    p = stats.ks_2samp(s0.draws[::20, 0], prior.sample(np.random.default_rng(6), 2000)[:, 0]).pvalue

    sigma2 = 0.09
    post = GibbsPosterior(data, LinearModel(), L2Loss(), ParameterPrior((Normal(0.0, 2.0),)), w=1 / (2 * sigma2))
    draws = sample_gibbs(post, 42_000, 2000, seed=1).draws[:, 0]
    mean, sd = known_variance_posterior(x, data.y, sigma2, 0.0, 2.0)
    se_mean = batch_means_se(draws)
    se_sd = batch_means_se((draws - draws.mean()) ** 2) / (2 * sd)
    ok = p > 0.01 and abs(draws.mean() - mean) < 3 * se_mean and abs(draws.std() - sd) < 3 * se_sd
    detail = (
        f"w=0 KS p {p:.3f}; conjugate mean {draws.mean():.5f} vs {mean:.5f} (3 SE {3 * se_mean:.1e}), "
        f"sd {draws.std():.5f} vs {sd:.5f} (3 SE {3 * se_sd:.1e})"
    )
    assert report(4, ok, detail)


def test_criterion_5_wasp_oracles(report):
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    C = (q * [0.5, 1.0, 4.0]) @ q.T
    tol = 1e-10
    S_same, _, _ = barycenter_covariance([C] * 4, tol)
    S_1d, _, _ = barycenter_covariance([[[1.0]], [[9.0]]], tol)
    S_diag, _, _ = barycenter_covariance([np.diag([1.0, 4.0]), np.diag([9.0, 16.0])], tol)
    covs = [(q * rng.uniform(0.2, 5, 3)) @ q.T + 0.1 * np.eye(3) for _ in range(6)]
    a, _, _ = barycenter_covariance(covs, tol)
    b, _, _ = barycenter_covariance(covs[::-1], tol)
    resid = fixed_point_residual(a, covs)
    results = {
        "identical": np.max(np.abs(S_same - C)) <= 1e-8,
        "1-D {1,9}": abs(S_1d[0, 0] - 4.0) <= 1e-8,
        "diagonal": np.max(np.abs(S_diag - np.diag([4.0, 9.0]))) <= 1e-8,
        "permutation": a.tobytes() == b.tobytes(),
        "residual": resid < 10 * tol,
    }
    ok = all(results.values())
    assert report(5, ok, ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in results.items()) + f" (residual {resid:.1e})")


def test_criterion_6_ess(report):
    rng = np.random.default_rng(3)
    r = np.cumsum(rng.normal(size=200)) * 0.1 + rng.normal(size=200)
    invariant = all(effective_sample_size(c * r) == effective_sample_size(r) for c in (-1000.0, -1.0, 1e-3, 0.5, 7.0, 1e4))
    white = effective_sample_size(np.random.default_rng(4).normal(size=1000))
    const = effective_sample_size(np.full(100, 2.5))
    ok = invariant and 800 <= white <= 1200 and const == 1.0
    assert report(6, ok, f"scale invariance {'exact' if invariant else 'broken'}, white noise n_e {white:.1f}, constant {const}")


def test_criterion_7_determinism(report, tmp_path):
    shutil.copy(CONFIGS / "toy.csv", tmp_path / "toy.csv")
    shutil.copy(CONFIGS / "toy.yaml", tmp_path / "toy.yaml")
    codes = [cli.cmd_calibrate(tmp_path / "toy.yaml", tmp_path / d) for d in ("a", "b")]
    same = {
        f: (tmp_path / "a" / "toy" / f).read_bytes() == (tmp_path / "b" / "toy" / f).read_bytes()
        for f in ("posterior.csv", "coverage.csv")
    }
    ok = codes == [0, 0] and all(same.values())
    assert report(7, ok, f"exit codes {codes}, byte-identical {same}")
