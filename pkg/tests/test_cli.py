import json
import shutil
from pathlib import Path

import numpy as np
import pytest
import yaml

from gibbscal import cli
from gibbscal.wasp import GaussianSummary

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_config(tmp_path, **tuning):
    shutil.copy(CONFIGS / "toy.csv", tmp_path / "toy.csv")
    doc = yaml.safe_load((CONFIGS / "toy.yaml").read_text())
    doc["tuning"].update({"B": 20, "w_grid": {"lo": 0.01, "hi": 10.0, "n": 6}})
    doc["tuning"].update(tuning)
    doc["sampler"] = {"n_iter": 1500, "n_burn": 500}
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def read_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def write_summaries(tmp_path, summaries):
    names = []
    for i, s in enumerate(summaries):
        name = f"s{i}.json"
        (tmp_path / name).write_text(s.to_json())
        names.append(name)
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"summaries": names}))
    return manifest


class TestCalibrate:
    def test_outputs(self, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["calibrate", str(small_config(tmp_path)), "--out", str(out)]) == 0
        for f in ("resolved_config.yaml", "manifest.json", "toy/posterior.csv", "toy/posterior.json", "toy/coverage.csv", "toy/summary.json"):
            assert (out / f).is_file(), f
        summary = json.loads((out / "toy" / "summary.json").read_text())
        assert summary["schema_version"] == 1
        assert summary["method"] == "bootstrap"
        assert 0.01 <= summary["w"] <= 10.0
        lo, hi = summary["interval"]["lo"][0], summary["interval"]["hi"][0]
        assert lo < hi
        assert (out / "toy" / "posterior.csv").read_text().splitlines()[0] == "theta"
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest) >= {"schema_version", "config", "experiments", "metadata"}
        assert "consensus" not in manifest

    def test_byte_identical_reruns(self, tmp_path):
        cfg = small_config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.cmd_calibrate(cfg, a) == 0
        assert cli.cmd_calibrate(cfg, b) == 0
        for f in ("toy/posterior.csv", "toy/coverage.csv", "toy/summary.json", "toy/posterior.json", "resolved_config.yaml"):
            assert (a / f).read_bytes() == (b / f).read_bytes(), f
        ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
        ma.pop("metadata"), mb.pop("metadata")
        assert ma == mb

    def test_regenerable_from_resolved_config(self, tmp_path):
        cfg = small_config(tmp_path)
        a = tmp_path / "a"
        assert cli.cmd_calibrate(cfg, a) == 0
        resolved = tmp_path / "resolved.yaml"
        shutil.copy(a / "resolved_config.yaml", resolved)
        b = tmp_path / "b"
        assert cli.cmd_calibrate(resolved, b) == 0
        assert (a / "toy/posterior.csv").read_bytes() == (b / "toy/posterior.csv").read_bytes()

    def test_seed_override_changes_chain(self, tmp_path):
        cfg = small_config(tmp_path, method="fixed", fixed_w=1.0)
        assert cli.main(["calibrate", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
        assert cli.main(["calibrate", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
        assert (tmp_path / "a/toy/posterior.csv").read_bytes() != (tmp_path / "b/toy/posterior.csv").read_bytes()
        assert not (tmp_path / "a/toy/coverage.csv").exists()

    def test_bad_alpha(self, tmp_path, capsys):
        cfg = small_config(tmp_path, alpha=1.5)
        code = cli.main(["calibrate", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 1
        err = read_error(capsys)
        assert err["exit_code"] == 1 and "tuning.alpha" in err["message"]

    def test_missing_column(self, tmp_path, capsys):
        cfg = small_config(tmp_path)
        (tmp_path / "toy.csv").write_text("x,z\n0.1,1\n0.2,2\n0.3,3\n")
        out = tmp_path / "o"
        assert cli.main(["calibrate", str(cfg), "--out", str(out)]) == 2
        assert read_error(capsys)["exit_code"] == 2
        assert json.loads((out / "error.json").read_text())["exit_code"] == 2

    def test_missing_data_file(self, tmp_path):
        cfg = small_config(tmp_path)
        (tmp_path / "toy.csv").unlink()
        assert cli.cmd_calibrate(cfg, tmp_path / "o") == 2

    def test_prior_dimension_mismatch(self, tmp_path):
        cfg = small_config(tmp_path)
        doc = yaml.safe_load(cfg.read_text())
        doc["prior"].append({"dist": "normal", "mean": 0.0, "sd": 1.0})
        cfg.write_text(yaml.safe_dump(doc))
        assert cli.cmd_calibrate(cfg, tmp_path / "o") == 1

    def test_tuning_failure(self, tmp_path, capsys):
        # coverage below target even at the smallest scale
        cfg = small_config(tmp_path, w_grid=[50.0, 100.0, 200.0])
        assert cli.cmd_calibrate(cfg, tmp_path / "o") == 3
        assert read_error(capsys)["error"] == "TuningError"

    def test_two_experiments_are_combined(self, tmp_path):
        cfg = small_config(tmp_path, method="fixed", fixed_w=1.0)
        shutil.copy(tmp_path / "toy.csv", tmp_path / "toy2.csv")
        doc = yaml.safe_load(cfg.read_text())
        doc["data"]["experiments"]["twin"] = "toy2.csv"
        cfg.write_text(yaml.safe_dump(doc))
        out = tmp_path / "o"
        assert cli.cmd_calibrate(cfg, out) == 0
        assert (out / "consensus.json").is_file()
        assert cli.cmd_combine(out / "manifest.json", "within", tmp_path / "c") == 0
        c = json.loads((tmp_path / "c" / "consensus.json").read_text())
        assert c["scaling"] == "within"


class TestCombine:
    def test_scalar_mean(self, tmp_path):
        m = write_summaries(tmp_path, [GaussianSummary([0.0], [[1.0]], id="a"), GaussianSummary([10.0], [[4.0]], id="b")])
        assert cli.main(["combine", str(m), "--scaling", "within"]) == 0
        c = json.loads((tmp_path / "consensus.json").read_text())
        assert c["mean"][0] == pytest.approx(2.0)
        assert c["cov"][0][0] == pytest.approx(2.25)
        rows = (tmp_path / "comparison.csv").read_text().splitlines()
        assert rows[0] == "source,parameter,mean,variance"
        assert rows[-1].startswith("consensus-within,theta0,2.0")

    def test_single_within_is_identity(self, tmp_path):
        s = GaussianSummary([1.0, 2.0], [[1.0, 0.2], [0.2, 0.5]], names=("a", "b"))
        m = write_summaries(tmp_path, [s])
        assert cli.cmd_combine(m, "within") == 0
        c = json.loads((tmp_path / "consensus.json").read_text())
        np.testing.assert_allclose(c["mean"], s.mean)
        np.testing.assert_allclose(c["cov"], s.cov, atol=1e-10)
        assert c["names"] == ["a", "b"]

    def test_nine_across(self, tmp_path):
        rng = np.random.default_rng(0)
        summaries = [GaussianSummary([rng.normal()], [[rng.uniform(0.5, 2.0)]]) for _ in range(9)]
        m = write_summaries(tmp_path, summaries)
        assert cli.cmd_combine(m, "within", tmp_path / "w") == 0
        assert cli.cmd_combine(m, "across", tmp_path / "a") == 0
        w = json.loads((tmp_path / "w" / "consensus.json").read_text())
        a = json.loads((tmp_path / "a" / "consensus.json").read_text())
        assert a["cov"][0][0] == pytest.approx(w["cov"][0][0] / 9, rel=1e-12)
        root = np.mean([np.sqrt(s.cov[0, 0]) for s in summaries])
        assert w["cov"][0][0] == pytest.approx(root**2, rel=1e-9)

    def test_dimension_mismatch(self, tmp_path, capsys):
        m = write_summaries(tmp_path, [GaussianSummary([0.0], [[1.0]]), GaussianSummary([0.0, 1.0], np.eye(2))])
        assert cli.cmd_combine(m) == 2
        assert read_error(capsys)["exit_code"] == 2

    def test_missing_manifest(self, tmp_path):
        assert cli.cmd_combine(tmp_path / "nope.json", out=tmp_path) == 2

    def test_bad_scaling(self, tmp_path):
        m = write_summaries(tmp_path, [GaussianSummary([0.0], [[1.0]])])
        assert cli.main(["combine", str(m), "--scaling", "sideways"]) == 1


class TestReproduce:
    def test_unknown_target(self, capsys):
        assert cli.main(["reproduce", "tantalum"]) == 1
        assert read_error(capsys)["error"] == "ConfigurationError"

    def test_goldens_ship_with_package(self):
        for target in cli.TARGETS:
            assert cli.golden_path(target).is_file(), target

    def test_toy_check_passes(self, tmp_path):
        assert cli.main(["reproduce", "toy", "--check", "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "check.json").read_text()) == {"passed": True, "failures": []}
        assert (tmp_path / "golden.json").is_file()

    def test_missing_golden(self, tmp_path, monkeypatch, capsys):
        def missing(target):
            raise FileNotFoundError(target)

        monkeypatch.setattr(cli, "load_golden", missing)
        assert cli.main(["reproduce", "toy", "--out", str(tmp_path / "a")]) == 0
        assert not (tmp_path / "a" / "golden.json").exists()
        assert cli.main(["reproduce", "toy", "--check", "--out", str(tmp_path / "b")]) == 2
        assert read_error(capsys)["error"] == "DataError"

    def test_usage_error(self):
        assert cli.main(["frobnicate"]) == 1
        assert cli.main([]) == 1


class TestShippedToyConfig:
    def test_interval_matches_toy_reference(self, tmp_path):
        shutil.copy(CONFIGS / "toy.csv", tmp_path / "toy.csv")
        shutil.copy(CONFIGS / "toy.yaml", tmp_path / "toy.yaml")
        assert cli.cmd_calibrate(tmp_path / "toy.yaml", tmp_path / "o") == 0
        s = json.loads((tmp_path / "o" / "toy" / "summary.json").read_text())
        lo, hi = s["interval"]["lo"][0], s["interval"]["hi"][0]
        assert lo == pytest.approx(0.58, abs=0.05) and hi == pytest.approx(0.70, abs=0.05)
        assert lo <= 0.65 <= hi
        assert 0.5 <= s["w"] <= 2.0
