"""Tolerance checks used by ``reproduce --check``.

Each checker compares a freshly computed report with published reference
values and with the shipped golden report, and returns a list of failure
messages (empty when everything passes).
"""

import numpy as np

# reference values and tolerances for the toy problem
TOY_REFERENCE = {
    "MLE": {"ci": (0.56, 0.57), "tol": 0.02},
    "GLS-KOH": {"ci": (0.48, 0.58), "tol": 0.04},
    "ESS-power": {"ci": (0.43, 0.70), "tol": 0.08},
    "Gibbs-bootstrap": {"ci": (0.58, 0.70), "tol": 0.05},
}
TOY_NEFF = (1.4, 0.5)
TOY_W_RANGE = (0.5, 2.0)
TOY_THETA = 0.65

# (method, autocorr) -> (E_w, coverage) for estimated tuning
TABLE_REFERENCE = {
    ("ParametricBootstrap", 0.1): (0.10, 0.92),
    ("ESS", 0.1): (0.13, 0.91),
    ("ParametricBootstrap", 0.2): (0.05, 0.89),
    ("ESS", 0.2): (0.08, 0.86),
}
COVERAGE_TOL = 0.07
W_FACTOR = 2.0


def _ci_close(name, ci, ref, tol):
    return [
        f"{name} CI endpoint {i} = {ci[i]:.4f} not within {tol} of {ref[i]}"
        for i in range(2)
        if not abs(ci[i] - ref[i]) <= tol
    ]


def toy_checks(report, golden=None):
    failures = []
    m = report["methods"]
    for name, ref in TOY_REFERENCE.items():
        failures += _ci_close(name, m[name]["ci"], ref["ci"], ref["tol"])
        if golden is not None:
            failures += _ci_close(f"{name} (golden)", m[name]["ci"], golden["methods"][name]["ci"], ref["tol"])
    n_eff = m["ESS-power"]["n_eff"]
    if not abs(n_eff - TOY_NEFF[0]) <= TOY_NEFF[1]:
        failures.append(f"ESS n_e = {n_eff:.3f} outside {TOY_NEFF[0]} +/- {TOY_NEFF[1]}")
    gb = m["Gibbs-bootstrap"]
    if not TOY_W_RANGE[0] <= gb["w"] <= TOY_W_RANGE[1]:
        failures.append(f"Gibbs-bootstrap w = {gb['w']:.3f} outside {TOY_W_RANGE}")
    if not gb["ci"][0] <= TOY_THETA <= gb["ci"][1]:
        failures.append(f"Gibbs-bootstrap CI {gb['ci']} excludes {TOY_THETA}")
    return failures


def _row_checks(label, row, E_w, coverage):
    out = []
    if not abs(row["coverage"] - coverage) <= COVERAGE_TOL:
        out.append(f"{label}: coverage {row['coverage']:.3f} not within {COVERAGE_TOL} of {coverage}")
    if not E_w / W_FACTOR <= row["E_w"] <= E_w * W_FACTOR:
        out.append(f"{label}: E_w {row['E_w']:.4f} not within a factor {W_FACTOR} of {E_w}")
    return out


def table_checks(report, golden=None):
    failures = []
    gold_rows = {}
    if golden is not None:
        gold_rows = {(r["method"], r["autocorr"]): r for r in golden["rows"]}
    rows = {(r["method"], r["autocorr"]): r for r in report["rows"]}
    for key, (E_w, cov) in TABLE_REFERENCE.items():
        if key not in rows:
            failures.append(f"row {key} missing")
            continue
        label = f"{key[0]} autocorr={key[1]}"
        failures += _row_checks(label, rows[key], E_w, cov)
        if key in gold_rows:
            failures += _row_checks(label + " (golden)", rows[key], gold_rows[key]["E_w"], gold_rows[key]["coverage"])
    return failures


def narrower_subsets(report):
    """For each method, the subsets whose interval is wider than the across-scaling consensus.

    Returns ``{method: (n_narrower, n_subsets)}`` counted over every
    parameter and subset. This is reported rather than checked: the 1/K
    factor makes the consensus narrower than a subset only when that subset
    is wider than about a third of the barycenter width.
    """
    out = {}
    for method, by_scaling in report["consensus"].items():
        across = by_scaling["across"]["interval"]
        width = np.subtract(across["hi"], across["lo"])
        subs = np.array(
            [np.subtract(e["posterior"][method]["interval"]["hi"], e["posterior"][method]["interval"]["lo"])
             for e in report["experiments"]]
        )
        out[method] = (int(np.sum(width < subs)), int(subs.size))
    return out


def ensemble_checks(report, golden=None):
    """Consensus means near the golden, and across scaling equal to within scaling over K."""
    failures = []
    k = len(report["experiments"])
    for method, by_scaling in report["consensus"].items():
        within, across = (np.asarray(by_scaling[s]["cov"]) for s in ("within", "across"))
        if not np.allclose(across, within / k, rtol=1e-12, atol=0.0):
            failures.append(f"{method}: across-scaling covariance is not the within covariance over {k}")
        if golden is not None:
            for scaling, c in by_scaling.items():
                g = golden["consensus"][method][scaling]
                sd = np.sqrt(np.diag(g["cov"]))
                if np.any(np.abs(np.subtract(c["mean"], g["mean"])) > 0.1 * sd):
                    failures.append(f"{method}/{scaling}: consensus mean {c['mean']} differs from golden {g['mean']}")
    return failures


CHECKS = {"toy": toy_checks, "simulation-table": table_checks, "ensemble-demo": ensemble_checks}
