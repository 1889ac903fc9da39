import csv
import hashlib
import json

import numpy as np
import pytest
import yaml

from cwsc import cli, experiments
from cwsc.errors import NumericError, UsageError
from cwsc.experiments import (KINDS, ExperimentConfig, Table, config_from_dict, emit_histogram, format_value,
                              load_config, run, run_experiment, table_to_csv)
from cwsc.spectral import Spectrum


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestFormatting:
    def test_values(self):
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(np.float64(2.0)) == "2"
        assert format_value(True) == "true"
        assert format_value(np.int64(7)) == "7"
        assert format_value(None) == ""
        assert float(format_value(1 / 3)) == 1 / 3

    def test_csv_quoting(self):
        t = Table(["name", "x"])
        t.add('a,"b"', 1.5)
        assert table_to_csv(t) == b'name,x\r\n"a,""b""",1.5\r\n'

    def test_row_length(self):
        with pytest.raises(ValueError):
            Table(["a"]).add(1, 2)


class TestHistogram:
    def test_zero_matrix_single_bin(self):
        t = emit_histogram([Spectrum(np.zeros(20))], bins=20)
        counts = t.column("count")
        assert sum(c > 0 for c in counts) == 1 and sum(counts) == 20

    def test_density_normalised(self):
        rng = np.random.default_rng(0)
        t = emit_histogram([Spectrum(rng.uniform(-2, 2, 500))], bins=40)
        width = t.rows[0][1] - t.rows[0][0]
        assert sum(t.column("density")) * width == pytest.approx(1.0)
        assert t.column("semicircle_density")[20] == pytest.approx(np.sqrt(4 - t.column("center")[20] ** 2) / (2 * np.pi))

    def test_empty(self):
        with pytest.raises(UsageError):
            emit_histogram([])
        with pytest.raises(UsageError):
            emit_histogram([Spectrum([])])

    def test_too_few_bins(self):
        with pytest.raises(UsageError):
            emit_histogram([Spectrum([0.0])], bins=9)


class TestConfig:
    def test_defaults_merge(self):
        cfg = ExperimentConfig("measure", {"n": 12})
        assert cfg.resolved_params == {"beta": 2.0, "alpha": 2.0, "n": 12}

    @pytest.mark.parametrize("doc", [{"kind": "nope"}, {"kind": "measure", "params": {"bogus": 1}},
                                     {"kind": "measure", "format": "xml"}, {"kind": "measure", "base_seed": -1},
                                     {"kind": "measure", "extra": 1}, {"params": {}}, [1, 2]])
    def test_invalid(self, doc):
        with pytest.raises(UsageError):
            config_from_dict(doc)

    def test_yaml_and_json(self, tmp_path):
        doc = {"kind": "large-deviation", "params": {"ns": [4, 5]}, "base_seed": 3}
        (tmp_path / "c.yaml").write_text(yaml.safe_dump(doc))
        (tmp_path / "c.json").write_text(json.dumps(doc))
        assert load_config(tmp_path / "c.yaml") == load_config(tmp_path / "c.json")

    def test_unreadable(self, tmp_path):
        with pytest.raises(UsageError):
            load_config(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(UsageError):
            load_config(tmp_path / "bad.json")

    def test_env_output_dir(self, monkeypatch, tmp_path):
        monkeypatch.setenv(experiments.ENV_OUTPUT_DIR, str(tmp_path))
        assert ExperimentConfig("measure", {}).resolved_output_dir() == tmp_path / "measure"
        assert ExperimentConfig("measure", {}, output_dir="x").resolved_output_dir().name == "x"

    def test_every_kind_has_description(self):
        assert len(KINDS) == 10
        assert all(k.description for k in KINDS.values())


class TestRun:
    def test_magnetization_table(self, tmp_path):
        res = run(ExperimentConfig("magnetization", {"betas": [2.0]}, output_dir=str(tmp_path)), jobs=1)
        assert res.status == 0
        rows = read_csv(tmp_path / "magnetization.csv")
        assert len(rows) == 1
        assert float(rows[0]["m"]) == pytest.approx(0.9575040240772688, abs=1e-15)
        assert float(rows[0]["residual"]) <= 1e-12

    def test_manifest_lists_hashes(self, tmp_path):
        res = run(ExperimentConfig("measure", {}, base_seed=5, output_dir=str(tmp_path)), jobs=1)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 5 and manifest["status"] == "pass"
        assert manifest["config"]["params"] == {"beta": 2.0, "alpha": 2.0, "n": 8}
        names = {f["name"] for f in manifest["files"]}
        assert names == {p.name for p in tmp_path.iterdir()} - {"manifest.json"}
        for f in manifest["files"]:
            assert hashlib.sha256((tmp_path / f["name"]).read_bytes()).hexdigest() == f["sha256"]
        assert len(res.files) == len(names) + 1

    def test_large_deviation_rows(self, tmp_path):
        cfg = ExperimentConfig("large-deviation", {"a_values": [0.3, 0.5]}, output_dir=str(tmp_path))
        assert run(cfg, jobs=1).status == 0
        rows = read_csv(tmp_path / "large_deviation.csv")
        assert len(rows) == 26 and all(r["pass"] == "true" for r in rows)

    def test_summary_and_failure_status(self, tmp_path):
        cfg = ExperimentConfig("lemma-a5", {"c_ells": [1, 3]}, output_dir=str(tmp_path))
        res = run(cfg, jobs=1)
        assert res.status == 1
        summary = {r["criterion"]: r["pass"] for r in read_csv(tmp_path / "summary.csv")}
        assert summary["mixed moment ell=1 n=32"] == "true"
        assert summary["mixed moment ell=3 n=32"] == "false"

    def test_json_format(self, tmp_path):
        cfg = ExperimentConfig("magnetization", {"betas": [1.5]}, output_dir=str(tmp_path), format="json")
        run(cfg, jobs=1)
        doc = json.loads((tmp_path / "magnetization.json").read_text())
        assert doc["columns"] == ["beta", "m", "residual"]
        assert doc["rows"][0][1] == pytest.approx(0.85855963664011036)

    def test_top_of_ladder(self):
        out = run_experiment(ExperimentConfig("spectrum-ladder", {"alphas": [2.0], "n_ladder": [800]}))
        hist = out.tables["histogram_alpha2"]
        for c, dens, sc in zip(hist.column("center"), hist.column("density"), hist.column("semicircle_density")):
            if abs(c) <= 1.5:
                assert abs(dens - sc) <= 0.05
        # the rank-one corrected matrix Y/sqrt(N) has no outlier, so its moments sit at the Catalan values
        corrected = [c for c in out.criteria if c.name.startswith("ESD(Y/sqrt N)")]
        assert len(corrected) == 2 and all(c.passed for c in corrected)
        summary = dict(zip(out.tables["ladder"].columns, out.tables["ladder"].rows[0]))
        assert summary["mean_moment2_b"] == pytest.approx(1.0, abs=0.02)
        assert summary["mean_moment4_b"] == pytest.approx(2.0, abs=0.1)

    def test_partial_output_removed(self, tmp_path):
        (tmp_path / "manifest.json").mkdir()
        cfg = ExperimentConfig("magnetization", {"betas": [2.0]}, output_dir=str(tmp_path))
        with pytest.raises(OSError):
            run(cfg, jobs=1)
        assert {p.name for p in tmp_path.iterdir()} == {"manifest.json"}

    def test_numeric_failure_writes_nothing(self, tmp_path, monkeypatch):
        def boom(p, seed, jobs):
            raise NumericError("no convergence", panels=1)

        monkeypatch.setitem(KINDS, "measure", experiments._Kind(boom, KINDS["measure"].defaults, "x"))
        with pytest.raises(NumericError):
            run(ExperimentConfig("measure", {}, output_dir=str(tmp_path / "out")), jobs=1)
        assert not (tmp_path / "out").exists()


class TestCli:
    def write(self, tmp_path, doc, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    def test_list(self, capsys):
        assert cli.main(["list-experiments"]) == 0
        out = capsys.readouterr().out
        for kind in KINDS:
            assert f"{kind}:" in out

    def test_run_pass(self, tmp_path, capsys):
        cfg = self.write(tmp_path, {"kind": "magnetization"})
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "9", "--jobs", "1"]) == 0
        assert "PASS" in capsys.readouterr().out
        assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"] == 9

    def test_run_criterion_failure(self, tmp_path):
        cfg = self.write(tmp_path, {"kind": "lemma-a5", "params": {"c_ells": [3]}})
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--jobs", "1"]) == 1

    @pytest.mark.parametrize("argv", [[], ["run"], ["frobnicate"], ["run", "--config", "/nonexistent.json"]])
    def test_usage(self, argv):
        assert cli.main(argv) == 2

    def test_invalid_parameter_is_usage(self, tmp_path):
        cfg = self.write(tmp_path, {"kind": "measure", "params": {"beta": -1.0}})
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_bad_jobs(self, tmp_path):
        cfg = self.write(tmp_path, {"kind": "measure"})
        assert cli.main(["run", "--config", cfg, "--jobs", "0"]) == 2

    def test_numeric_exit(self, tmp_path, monkeypatch):
        def boom(p, seed, jobs):
            raise NumericError("eigensolver did not converge")

        monkeypatch.setitem(KINDS, "measure", experiments._Kind(boom, KINDS["measure"].defaults, "x"))
        cfg = self.write(tmp_path, {"kind": "measure"})
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3

    def test_yaml_config_and_format_flag(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("kind: large-deviation\nparams:\n  ns: [4, 5, 6]\n")
        assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "o"), "--format", "json"]) == 0
        assert (tmp_path / "o" / "large_deviation.json").exists()
