"""Command-line front end.

Subcommands::

    gibbscal calibrate CONFIG [--out DIR] [--seed N] [--jobs N]
    gibbscal combine MANIFEST [--scaling within|across] [--out DIR]
    gibbscal reproduce {toy,simulation-table,ensemble-demo} [--out DIR] [--check] [--jobs N]

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical or
tuning failure (and ``reproduce --check`` mismatches). Failures print a JSON
object ``{"error", "message", "exit_code"}`` to stderr and, when an output
directory is known, write it to ``error.json`` there.
"""

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rngmod
from .config import SCHEMA_VERSION, load_config
from .core import ExperimentData
from .errors import CalibrationError, ConfigurationError, DomainError, StructuralError
from .pipeline import calibrate_experiment
from .sampler import GibbsPosterior
from .wasp import GaussianSummary, combine, gaussianize

log = logging.getLogger("gibbscal")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
TARGETS = ("toy", "simulation-table", "ensemble-demo")


class DataError(Exception):
    """Unreadable or malformed input data (exit code 2)."""


class CheckFailed(Exception):
    """Reproduced results disagree with the goldens (exit code 3)."""


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def atomic_write(path, write):
    """Call ``write(tmp_path)`` and move the file into place with one rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")

    atomic_write(path, write)


def write_text(path, text):
    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)

    atomic_write(path, write)


def _metadata():
    """The only place a timestamp appears in any output."""
    return {"created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"), "version": __version__}


def _error(exc, code, out_dir=None):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    diagnostics = getattr(exc, "diagnostics", None)
    if diagnostics:
        payload["diagnostics"] = diagnostics
    print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)
    if out_dir is not None:
        try:
            write_json(Path(out_dir) / "error.json", payload)
        except OSError:
            pass
    return code


def _classify(exc):
    if isinstance(exc, (ConfigurationError,)):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, StructuralError, DomainError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_NUMERIC


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def _read_data(path, exp_id):
    try:
        return ExperimentData.from_csv(path, id=exp_id)
    except FileNotFoundError:
        raise DataError(f"data file for experiment {exp_id!r} not found: {path}") from None
    except (StructuralError, DomainError, ValueError) as exc:
        raise DataError(f"experiment {exp_id!r} ({path}): {exc}") from None


def _experiment_outputs(res, method, cfg, exp_dir, names):
    k = len(cfg.prior)
    s = res.posteriors[method]
    atomic_write(exp_dir / "posterior.csv", s.to_csv)
    write_json(exp_dir / "posterior.json", s.sidecar())
    files = {"posterior": "posterior.csv", "sidecar": "posterior.json"}
    if res.curve is not None:
        atomic_write(exp_dir / "coverage.csv", res.curve.to_csv)
        files["coverage"] = "coverage.csv"
    summ = gaussianize(s.draws[:, :k], id=res.id, names=names[:k])
    ci = res.intervals[method]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "id": res.id,
        "names": names,
        "method": method,
        "w": float(res.scales[method]),
        "theta_hat": res.theta_hat.tolist(),
        "n_eff": float(res.n_eff),
        "kernel": None if res.kernel is None else {
            "s2": float(res.kernel.s2), "length_scale": float(res.kernel.length_scale), "nugget": float(res.kernel.nugget)
        },
        "interval": {"alpha": ci.alpha, "lo": ci.lo.tolist(), "hi": ci.hi.tolist()},
        "median": np.median(s.draws, axis=0).tolist(),
        "acceptance_rate": s.acceptance_rate,
        "summary": summ.to_dict(),
        "files": files,
    }
    write_json(exp_dir / "summary.json", summary)
    return summary


def cmd_calibrate(config_path, out=None, seed=None, n_jobs=1):
    """Calibrate every experiment in the config and write the outputs.

    Returns the exit code.
    """
    out_dir = None
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg = cfg.model_copy(update={"seed": int(seed)})
        base = Path(config_path).resolve().parent
        out_dir = Path(out) if out is not None else base / cfg.outputs.directory
        model = cfg.build_model()
        prior = cfg.build_prior()
        disc = cfg.build_discrepancy()
        tuning = cfg.bootstrap_config(n_jobs=n_jobs)
        method = cfg.tuning.method
        if prior.dim != model.dim_theta + (1 if cfg.loss.kind == "gaussian_nll" else 0):
            raise ConfigurationError(
                f"prior: {len(cfg.prior)} entries given but model {cfg.model.name!r} has {model.dim_theta} parameters"
            )
        datasets = [_read_data(base / p, exp_id) for exp_id, p in cfg.data.experiments.items()]

        out_dir.mkdir(parents=True, exist_ok=True)
        write_text(out_dir / "resolved_config.yaml", cfg.to_yaml())
        entries, summaries = [], []
        for k, data in enumerate(datasets):
            post = GibbsPosterior(data, model, cfg.build_loss(data.x, disc), prior)
            exp_tuning = replace(tuning, seed=int(rngmod.stream(cfg.seed, 4, k).integers(2**63)))
            res = calibrate_experiment(
                post, disc, exp_tuning, methods=(method,), policy=cfg.tuning.policy,
                n_iter=cfg.sampler.n_iter, n_burn=cfg.sampler.n_burn,
                seed=int(rngmod.stream(cfg.seed, 3, k).integers(2**63)),
                fixed_w=cfg.tuning.fixed_w if cfg.tuning.fixed_w is not None else 1.0,
                alpha=cfg.tuning.alpha,
            )
            names = list(post.names())
            summary = _experiment_outputs(res, method, cfg, out_dir / data.id, names)
            summaries.append(GaussianSummary.from_dict(summary["summary"]))
            entries.append({"id": data.id, "w": summary["w"], "summary": f"{data.id}/summary.json"})
            log.info("calibrated %s: w=%.4g", data.id, summary["w"])

        manifest = {
            "schema_version": SCHEMA_VERSION,
            "config": cfg.to_dict(),
            "experiments": entries,
            "scaling": cfg.ensemble.scaling,
            "metadata": _metadata(),
        }
        if len(summaries) > 1:
            c = combine(summaries, cfg.ensemble.scaling, cfg.ensemble.tol, cfg.ensemble.max_iter)
            write_json(out_dir / "consensus.json", dict(c.to_dict(), schema_version=SCHEMA_VERSION))
            manifest["consensus"] = "consensus.json"
        write_json(out_dir / "manifest.json", manifest)
        return EXIT_OK
    except (ConfigurationError, DataError, CalibrationError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return _error(exc, _classify(exc), out_dir)


# ---------------------------------------------------------------------------
# combine
# ---------------------------------------------------------------------------


def _load_summaries(manifest_path):
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest is not valid JSON: {exc}") from None
    if "summaries" in doc:
        paths = doc["summaries"]
    elif "experiments" in doc:
        paths = [e["summary"] for e in doc["experiments"]]
    else:
        raise DataError("manifest needs a 'summaries' list or an 'experiments' list")
    if not paths:
        raise DataError("manifest lists no summaries")
    out = []
    for p in paths:
        path = manifest_path.parent / p
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read summary {path}: {exc}") from None
        d = d.get("summary", d)
        try:
            out.append(GaussianSummary.from_dict(d))
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"malformed summary {path}: {exc}") from None
    dims = {s.dim for s in out}
    if len(dims) > 1:
        raise DataError(f"summaries have different parameter dimensions {sorted(dims)}")
    return out


def cmd_combine(manifest_path, scaling="across", out=None, tol=1e-10, max_iter=500):
    """Combine per-experiment Gaussian summaries into a consensus posterior."""
    out_dir = Path(out) if out is not None else Path(manifest_path).resolve().parent
    try:
        if scaling not in ("within", "across"):
            raise ConfigurationError(f"scaling must be 'within' or 'across', got {scaling!r}")
        summaries = _load_summaries(manifest_path)
        c = combine(summaries, scaling, tol, max_iter)
        write_json(out_dir / "consensus.json", dict(c.to_dict(), schema_version=SCHEMA_VERSION))
        names = list(c.names) or [f"theta{i}" for i in range(c.mean.size)]

        def write_table(tmp):
            with open(tmp, "w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["source", "parameter", "mean", "variance"])
                for s in summaries:
                    for i, name in enumerate(names):
                        wr.writerow([s.id, name, repr(float(s.mean[i])), repr(float(s.cov[i, i]))])
                for i, name in enumerate(names):
                    wr.writerow([f"consensus-{scaling}", name, repr(float(c.mean[i])), repr(float(c.cov[i, i]))])

        atomic_write(out_dir / "comparison.csv", write_table)
        return EXIT_OK
    except (ConfigurationError, DataError, CalibrationError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return _error(exc, _classify(exc), out_dir)


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------


def golden_path(target):
    return resources.files("gibbscal").joinpath("goldens", f"{target}.json")


def load_golden(target):
    return json.loads(golden_path(target).read_text(encoding="utf-8"))


def _toy_report():
    from .experiments.toy import run_toy

    report = run_toy()
    report.pop("curves")
    return report


def _run_target(target, n_jobs, n_mc):
    if target == "toy":
        return _toy_report()
    if target == "simulation-table":
        from .experiments.simstudy import run_table

        rows = run_table(n_mc=n_mc, seed=0, n_jobs=n_jobs)
        for r in rows:
            r.pop("w")
            r.pop("covered")
        return {"n_mc": n_mc, "rows": rows}
    from .experiments.ensemble import run_ensemble_demo

    return run_ensemble_demo(n_jobs=n_jobs)


def cmd_reproduce(target, out=None, check=False, n_jobs=1, n_mc=100):
    """Run a built-in reproduction and optionally compare it with its golden."""
    from . import checks

    if target not in TARGETS:
        return _error(ConfigurationError(f"unknown target {target!r}; choose from {list(TARGETS)}"), EXIT_CONFIG)
    out_dir = Path(out) if out is not None else Path("reproduce") / target
    try:
        report = _run_target(target, n_jobs, n_mc)
        write_json(out_dir / "report.json", report)
        if target == "simulation-table":
            from .experiments.simstudy import write_table_csv

            atomic_write(out_dir / "table.csv", lambda tmp: write_table_csv(report["rows"], tmp))
        try:
            golden = load_golden(target)
        except FileNotFoundError:
            if check:
                raise DataError(f"no golden shipped for target {target!r}") from None
            golden = None
        if golden is not None:
            write_json(out_dir / "golden.json", golden)
        if check:
            failures = checks.CHECKS[target](report, golden)
            write_json(out_dir / "check.json", {"passed": not failures, "failures": failures})
            if failures:
                raise CheckFailed("; ".join(failures))
        return EXIT_OK
    except CheckFailed as exc:
        return _error(exc, EXIT_NUMERIC, out_dir)
    except (ConfigurationError, DataError, CalibrationError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return _error(exc, _classify(exc), out_dir)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="gibbscal", description="Gibbs-posterior calibration of computer models.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="calibrate the experiments listed in a config file")
    c.add_argument("config")
    c.add_argument("--out", help="output directory (overrides outputs.directory)")
    c.add_argument("--seed", type=int, help="override the root seed")
    c.add_argument("--jobs", type=int, default=1, help="worker processes for the bootstrap")

    m = sub.add_parser("combine", help="combine per-experiment summaries into a consensus posterior")
    m.add_argument("manifest")
    m.add_argument("--scaling", default="across", help="'within' or 'across' (default)")
    m.add_argument("--out", help="output directory (default: next to the manifest)")

    r = sub.add_parser("reproduce", help="run a built-in reproduction")
    r.add_argument("target", help=f"one of {', '.join(TARGETS)}")
    r.add_argument("--out", help="output directory (default: reproduce/<target>)")
    r.add_argument("--check", action="store_true", help="compare with the shipped goldens")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.add_argument("--n-mc", type=int, default=100, help="Monte-Carlo iterations for simulation-table")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors are configuration errors
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "calibrate":
        return cmd_calibrate(args.config, args.out, args.seed, args.jobs)
    if args.command == "combine":
        return cmd_combine(args.manifest, args.scaling, args.out)
    return cmd_reproduce(args.target, args.out, args.check, args.jobs, args.n_mc)


if __name__ == "__main__":
    sys.exit(main())
