import csv
import json
from pathlib import Path

import pytest

from coaldecomp.cli import ConfigError, main, parse_config
from coaldecomp.engine import THREADS_ENV

GOLDEN = Path(__file__).parent / "golden"

ISHIGAMI = {
    "model": {"name": "ishigami", "a": 7, "b": 0.1},
    "inputs": {"type": "independent", "marginals": [{"family": "uniform", "a": "-pi", "b": "pi"}] * 3},
    "qoi": "variance",
    "n_outer": 60, "n_inner": 12, "seed": 42,
    "emit_shapley": True,
}

MMD = {
    "model": {"name": "linear", "beta": [1, 0]},
    "inputs": {"type": "independent", "marginals": [{"family": "normal", "mean": 0, "std": 1}] * 2},
    "qoi": "mmd",
    "n_outer": 30, "n_inner": 10, "n_ref": 40, "seed": 3,
}


def write(tmp_path, cfg, name="exp.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def key_tree(obj):
    # nested key structure of a report; lists are represented by their first element
    if isinstance(obj, dict):
        return {k: key_tree(v) for k, v in sorted(obj.items())}
    if isinstance(obj, list):
        return [key_tree(obj[0])] if obj and isinstance(obj[0], dict) else "list"
    return type(obj).__name__ if obj is not None else "null"


class TestRun:
    def test_artifacts(self, tmp_path):
        path = write(tmp_path, ISHIGAMI, "ishigami_variance.json")
        assert main(["run", str(path), "--quiet"]) == 0
        report = json.loads((tmp_path / "ishigami_variance.report.json").read_text())
        assert set(report) == {"meta", "phi", "psi", "ratios", "diagnostics", "attribution"}
        with open(tmp_path / "ishigami_variance.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8
        assert [r["subset"] for r in rows] == ["", "1", "2", "1,2", "3", "1,3", "2,3", "1,2,3"]
        assert [int(r["size"]) for r in rows] == [0, 1, 1, 2, 1, 2, 2, 3]
        with open(tmp_path / "ishigami_variance.shapley.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 3

    def test_golden_schema(self, tmp_path):
        path = write(tmp_path, ISHIGAMI)
        assert main(["run", str(path), "--quiet"]) == 0
        report = json.loads((tmp_path / "exp.report.json").read_text())
        golden = json.loads((GOLDEN / "variance_report_schema.json").read_text())
        assert key_tree(report) == golden

    def test_csv_matches_report(self, tmp_path):
        path = write(tmp_path, ISHIGAMI)
        main(["run", str(path), "--quiet"])
        report = json.loads((tmp_path / "exp.report.json").read_text())
        with open(tmp_path / "exp.csv") as fh:
            rows = list(csv.DictReader(fh))
        for row, phi, psi in zip(rows, report["phi"], report["psi"]):
            assert float(row["phi"]) == phi["value"]
            assert float(row["psi_se"]) == psi["std_error"]

    @pytest.mark.parametrize("cfg", [ISHIGAMI, MMD])
    def test_byte_identical_across_threads(self, tmp_path, cfg):
        path = write(tmp_path, cfg)
        blobs = []
        for threads in ("1", "3"):
            out = tmp_path / f"t{threads}"
            assert main(["run", str(path), "--quiet", "--threads", threads, "--output-dir", str(out)]) == 0
            blobs.append((out / "exp.report.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_env_threads(self, tmp_path, monkeypatch):
        path = write(tmp_path, ISHIGAMI)
        monkeypatch.setenv(THREADS_ENV, "2")
        assert main(["run", str(path), "--quiet", "--output-dir", str(tmp_path / "a")]) == 0
        monkeypatch.setenv(THREADS_ENV, "zero")
        assert main(["run", str(path), "--quiet", "--threads", "1", "--output-dir", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "exp.report.json").read_bytes() == (tmp_path / "b" / "exp.report.json").read_bytes()

    def test_summary_printed(self, tmp_path, capsys):
        main(["run", str(write(tmp_path, ISHIGAMI))])
        out = capsys.readouterr().out
        assert "fractional:" in out and "sum identity: ok" in out

    def test_matrix_report_is_json(self, tmp_path):
        cfg = {"model": "sum_difference", "inputs": MMD["inputs"], "qoi": "covmatrix",
               "n_outer": 20, "n_inner": 5, "seed": 1}
        assert main(["run", str(write(tmp_path, cfg)), "--quiet"]) == 0
        report = json.loads((tmp_path / "exp.report.json").read_text())
        assert report["ratios"] is None
        assert len(report["psi"][3]["value"]) == 2
        assert report["diagnostics"]["dk_membership"]["accepted"] in (True, False)


class TestErrors:
    def test_dimension_cap(self, tmp_path, capsys):
        cfg = {"model": {"name": "linear", "beta": [1] * 25},
               "inputs": {"type": "independent", "marginals": [{"family": "uniform", "a": 0, "b": 1}] * 25},
               "qoi": "variance"}
        assert main(["run", str(write(tmp_path, cfg))]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "config"
        assert "dimension cap of 24" in err["message"]

    def test_covariance_on_scalar_model(self, tmp_path, capsys):
        cfg = dict(ISHIGAMI, qoi="covariance")
        assert main(["validate", str(write(tmp_path, cfg))]) == 2
        assert "incompatible qoi" in capsys.readouterr().err

    def test_unknown_model(self, tmp_path, capsys):
        cfg = dict(ISHIGAMI, model={"name": "borehole"})
        assert main(["validate", str(write(tmp_path, cfg))]) == 2
        msg = json.loads(capsys.readouterr().err)["message"]
        for name in ("constant", "ishigami", "linear", "sum_difference"):
            assert name in msg

    def test_missing_file(self, tmp_path):
        assert main(["validate", str(tmp_path / "nope.json")]) == 2

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["run", str(path)]) == 2

    def test_bad_threads(self, tmp_path):
        assert main(["run", str(write(tmp_path, ISHIGAMI)), "--threads", "0"]) == 2

    def test_estimation_failure(self, tmp_path, capsys):
        # a constant output has no spread for the median-heuristic bandwidth
        cfg = dict(MMD, model={"name": "constant", "d": 2, "value": 1.0})
        assert main(["run", str(write(tmp_path, cfg))]) == 3
        assert json.loads(capsys.readouterr().err)["error"] == "estimation"

    def test_parse_config_types(self):
        with pytest.raises(ConfigError, match="n_outer must be an integer"):
            parse_config(dict(ISHIGAMI, n_outer=1.5))
        with pytest.raises(ConfigError, match="unknown qoi"):
            parse_config(dict(ISHIGAMI, qoi="entropy"))


class TestValidate:
    def test_ok(self, tmp_path, capsys):
        assert main(["validate", str(write(tmp_path, ISHIGAMI))]) == 0
        assert capsys.readouterr().out.startswith("ok")
        assert not (tmp_path / "exp.report.json").exists()

    @pytest.mark.parametrize("name", sorted(p.name for p in (Path(__file__).parents[1] / "configs").glob("*.json")))
    def test_shipped_configs(self, name, capsys):
        path = Path(__file__).parents[1] / "configs" / name
        assert main(["validate", str(path), "--quiet"]) == 0
