import json
import os

import pytest

from siwalk import cli

ERW1 = "configs/erw1d.json"
ERW2 = "configs/erw2d.json"
OERRW = "configs/oerrw1d.json"


def run(args):
    return cli.main(args)


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestExitCodes:
    def test_enumerate_ok(self, tmp_path):
        out = str(tmp_path / "r.json")
        assert run(["enumerate", "--model", ERW1, "--n", "5",
                    "--out", out]) == 0
        rep = json.loads(read_bytes(out))
        assert rep["quantity"] == "two-point-law"

    def test_verify_ok(self, tmp_path):
        out = str(tmp_path / "v.json")
        assert run(["verify", "--model", ERW1, "--n", "6", "--m-max", "7",
                    "--out", out]) == 0
        rep = json.loads(read_bytes(out))
        assert rep["pass"] is True

    def test_check_failure_exit_1(self, tmp_path):
        # an impossible tolerance turns tiny float noise into a failure
        out = str(tmp_path / "v.json")
        assert run(["verify", "--model", OERRW, "--n", "6", "--m-max", "7",
                    "--tol", "1e-300", "--out", out]) == 1
        rep = json.loads(read_bytes(out))
        assert rep["pass"] is False

    def test_bad_config_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"variant": "erw", "dim": 0, "beta": 0.5}')
        assert run(["pi", "--model", str(bad), "--m-max", "3"]) == 2

    def test_missing_config_exit_2(self):
        assert run(["pi", "--model", "configs/nope.json", "--m-max", "3"]) == 2

    def test_budget_exit_3(self):
        assert run(["enumerate", "--model", ERW2, "--n", "25"]) == 3


class TestDeterministicReports:
    def test_repeat_runs_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        args = ["speed", "--model", ERW1, "--n", "5", "--m-max", "6"]
        assert run(args + ["--out", a]) == 0
        assert run(args + ["--out", b]) == 0
        assert read_bytes(a) == read_bytes(b)

    def test_worker_count_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        base = ["mc", "--model", OERRW, "--n", "100", "--samples", "2000",
                "--seed", "5", "--m-max", "6"]
        assert run(base + ["--workers", "1", "--out", a]) == 0
        assert run(base + ["--workers", "8", "--out", b]) == 0
        assert read_bytes(a) == read_bytes(b)

    def test_verify_worker_count_byte_identical(self, tmp_path):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        base = ["verify", "--model", ERW2, "--n", "5", "--m-max", "6",
                "--skip-direct"]
        assert run(base + ["--workers", "1", "--out", a]) == 0
        assert run(base + ["--workers", "8", "--out", b]) == 0
        assert read_bytes(a) == read_bytes(b)


class TestOutputs:
    def test_csv_mirror(self, tmp_path):
        out = str(tmp_path / "pi.json")
        assert run(["pi", "--model", ERW1, "--m-max", "5", "--format", "csv",
                    "--out", out]) == 0
        csv_path = str(tmp_path / "pi.csv")
        assert os.path.exists(csv_path)
        lines = read_bytes(csv_path).decode().splitlines()
        assert lines[0] == "m,abs_mass,total_mass"
        assert len(lines) == 5       # header + lags 2..5

    def test_stdout_when_no_out(self, capsys):
        assert run(["pi", "--model", ERW1, "--m-max", "4"]) == 0
        captured = capsys.readouterr()
        rep = json.loads(captured.out)
        assert rep["quantity"] == "expansion-coefficients"

    def test_timing_only_on_stderr(self, tmp_path, capsys):
        out = str(tmp_path / "r.json")
        run(["pi", "--model", ERW1, "--m-max", "4", "--out", out])
        captured = capsys.readouterr()
        assert captured.out == ""
        assert "elapsed" in captured.err
        assert b"elapsed" not in read_bytes(out)

    def test_induction_report(self, tmp_path):
        out = str(tmp_path / "ind.json")
        assert run(["induction", "--model", ERW1, "--n", "6", "--m-max", "6",
                    "--out", out]) == 0
        rep = json.loads(read_bytes(out))
        assert rep["pass"] is True
        assert "decay_audit" in rep and "telescoping" in rep

    def test_mc_report_fields(self, tmp_path):
        out = str(tmp_path / "mc.json")
        assert run(["mc", "--model", OERRW, "--n", "100", "--samples", "2000",
                    "--seed", "1", "--m-max", "6", "--out", out]) == 0
        rep = json.loads(read_bytes(out))
        assert rep["drift_pass"] and rep["covariance_pass"]
        assert rep["clt_diagnostic"]["all_pass"]

    def test_all_battery(self, tmp_path):
        out = str(tmp_path / "battery")
        assert run(["all", "--model", ERW1, "--n", "5", "--m-max", "6",
                    "--out", out]) == 0
        assert os.path.exists(out + ".verify.json")
        assert os.path.exists(out + ".induction.json")

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.strip() == cli.__version__
