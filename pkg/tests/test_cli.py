import json
import pathlib
import subprocess
import sys

import pytest

from dpmean.cli import DatasetFormatError, main, read_dataset_csv, selftest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "dpmean.cli", *args], capture_output=True, text=True
    )


class TestReadDataset:
    def test_fixture_parses(self):
        data = read_dataset_csv(str(FIXTURES / "est1d_dataset.csv"))
        assert (data.n, data.m, data.d) == (256, 25, 1)

    def test_missing_column_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("person_id,sample_id,x1\n0,0,1.0\n0,1\n")
        with pytest.raises(DatasetFormatError, match="line 3"):
            read_dataset_csv(str(path))

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("pid,sid,x1\n0,0,1.0\n")
        with pytest.raises(DatasetFormatError, match="line 1"):
            read_dataset_csv(str(path))

    def test_unequal_sample_counts_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("person_id,sample_id,x1\n0,0,1.0\n0,1,1.0\n1,0,2.0\n")
        with pytest.raises(DatasetFormatError, match="unequal"):
            read_dataset_csv(str(path))

    def test_multivariate_columns(self, tmp_path):
        path = tmp_path / "ok.csv"
        path.write_text(
            "person_id,sample_id,x1,x2\n0,0,1.0,2.0\n0,1,3.0,4.0\n1,0,5.0,6.0\n1,1,7.0,8.0\n"
        )
        data = read_dataset_csv(str(path))
        assert (data.n, data.m, data.d) == (2, 2, 2)


class TestCliProcess:
    def test_selftest_exit_zero(self):
        proc = run_cli("selftest")
        assert proc.returncode == 0
        assert "selftest" in proc.stdout

    def test_unknown_subcommand_usage_exit_2(self):
        proc = run_cli("frobnicate")
        assert proc.returncode == 2
        assert "usage" in proc.stderr.lower()

    def test_no_subcommand_exit_2(self):
        proc = run_cli()
        assert proc.returncode == 2

    def test_malformed_csv_exit_2(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("person_id,sample_id,x1\n0,0,oops\n")
        proc = run_cli(
            "estimate", "--data", str(path), "--config", str(FIXTURES / "est1d_config.json")
        )
        assert proc.returncode == 2
        assert "line 2" in proc.stderr


class TestEstimateInProcess:
    def test_fixture_estimate_within_tolerance(self, capsys):
        meta = json.loads((FIXTURES / "est1d_fixture.json").read_text())
        rc = main(
            [
                "estimate",
                "--data",
                str(FIXTURES / "est1d_dataset.csv"),
                "--config",
                str(FIXTURES / "est1d_config.json"),
            ]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert abs(payload["estimate"][0] - meta["true_mean"]) <= meta["tolerance"]

    def test_flag_overrides(self, capsys):
        rc = main(
            [
                "estimate",
                "--data",
                str(FIXTURES / "est1d_dataset.csv"),
                "--estimator",
                "est1d",
                "--epsilon",
                "1",
                "--k",
                "4",
                "--alpha",
                "0.35",
                "--seed",
                "7",
            ]
        )
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["epsilon"] == 1.0

    def test_missing_required_exit_2(self):
        rc = main(["estimate", "--data", str(FIXTURES / "est1d_dataset.csv")])
        assert rc == 2

    def test_out_file_written(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        rc = main(
            [
                "estimate",
                "--data",
                str(FIXTURES / "est1d_dataset.csv"),
                "--config",
                str(FIXTURES / "est1d_config.json"),
                "--out",
                str(out),
            ]
        )
        capsys.readouterr()
        assert rc == 0
        assert json.loads(out.read_text())["seed"] == 7


class TestSweepInProcess:
    def test_sweep_runs_from_config(self, tmp_path, capsys):
        cfg = {
            "estimator": "est1d",
            "spec": {"family": "scaled_gaussian", "mean": [0.3], "k": 4.0, "extra": {}},
            "n": [256],
            "m": [100],
            "epsilon": [1.0],
            "delta": [0.0],
            "alpha": [0.15],
            "k": [4.0],
            "trials": 2,
            "seed": 3,
            "output_path": str(tmp_path / "sweep.csv"),
        }
        cfg_path = tmp_path / "sweep.json"
        cfg_path.write_text(json.dumps(cfg))
        rc = main(["sweep", "--config", str(cfg_path)])
        capsys.readouterr()
        assert rc == 0
        assert (tmp_path / "sweep.csv").exists()

    def test_lemma_checks_exit_zero(self, capsys):
        rc = main(["lemma-checks", "--seed", "7"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "all passed" in out


def test_selftest_in_process():
    assert selftest(verbose=False) == 0
