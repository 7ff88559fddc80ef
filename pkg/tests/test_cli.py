import json

import numpy as np
import pytest

from adafat import SimConfig, generate
from adafat.cli import main


@pytest.fixture
def panel_files(tmp_path):
    cfg = SimConfig(m=40, n=60, pi1=0.2, seed=21)
    data, model, split, Z, E = generate(cfg, 0)
    y_path = tmp_path / "y.csv"
    x_path = tmp_path / "x.csv"
    np.savetxt(y_path, data.Y, delimiter=",")
    np.savetxt(x_path, data.X, delimiter=",")
    bundle_path = tmp_path / "truth.npz"
    np.savez(
        bundle_path,
        alpha=model.alpha,
        B=model.B,
        Gamma=model.Gamma,
        Sigma_eps=model.Sigma_eps,
        q=model.q,
        Z=Z,
        E=E,
    )
    return y_path, x_path, bundle_path


class TestCmdTest:
    def test_happy_path_json(self, panel_files, tmp_path, capsys):
        y_path, x_path, _ = panel_files
        out = tmp_path / "result.json"
        code = main(
            [
                "test",
                "--y", str(y_path),
                "--x", str(x_path),
                "--method", "adafat",
                "--tau", "0.1",
                "--out", str(out),
                "--trace",
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["outcomes"][0]["method"] == "adafat"
        assert "rejected" in payload["outcomes"][0]
        assert "traces" in payload
        assert payload["config"]["tau"] == 0.1

    def test_multiple_methods_csv(self, panel_files, tmp_path):
        y_path, x_path, _ = panel_files
        out = tmp_path / "result.csv"
        code = main(
            [
                "test",
                "--y", str(y_path),
                "--x", str(x_path),
                "--methods", "ori,fatdw,bh",
                "--out", str(out),
            ]
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("method,tau,nu,threshold")
        assert len(lines) == 4

    def test_missing_file_exits_2(self, tmp_path, capsys):
        code = main(["test", "--y", str(tmp_path / "absent.csv")])
        assert code == 2
        assert "absent.csv" in capsys.readouterr().err

    def test_oracle_without_truth_exits_2(self, panel_files, capsys):
        y_path, x_path, _ = panel_files
        code = main(["test", "--y", str(y_path), "--x", str(x_path), "--method", "ora"])
        assert code == 2
        assert "truth" in capsys.readouterr().err

    def test_oracle_with_truth_bundle(self, panel_files, tmp_path):
        y_path, x_path, bundle = panel_files
        out = tmp_path / "ora.json"
        code = main(
            [
                "test",
                "--y", str(y_path),
                "--x", str(x_path),
                "--method", "ora",
                "--truth", str(bundle),
                "--out", str(out),
                "--emit-pvalues",
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert len(payload["outcomes"][0]["p_values"]) == 40

    def test_constant_panel_exits_3(self, tmp_path, capsys):
        y_path = tmp_path / "const.csv"
        np.savetxt(y_path, np.full((12, 4), 1.7), delimiter=",")
        code = main(["test", "--y", str(y_path), "--method", "ori"])
        assert code == 3


class TestCmdSimulate:
    def test_invalid_pi1_exits_2(self, capsys):
        code = main(["simulate", "--m", "30", "--n", "20", "--pi1", "1.0"])
        assert code == 2

    def test_report_and_table(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(
            [
                "simulate",
                "--m", "40", "--n", "30",
                "--reps", "3",
                "--seed", "7",
                "--methods", "ori,fatdw",
                "--out", str(out),
            ]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "FDP mean" in stdout
        payload = json.loads(out.read_text())
        assert payload["config"]["seed"] == 7
        assert len(payload["fdp"]["fatdw"]) == 3
        assert (tmp_path / "report.csv").exists()

    def test_byte_identical_outputs(self, tmp_path):
        args = [
            "simulate",
            "--m", "40", "--n", "30",
            "--reps", "2",
            "--seed", "11",
            "--methods", "ori,adafat",
        ]
        out1 = tmp_path / "a.json"
        out2 = tmp_path / "b.json"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_log_env_var_smoke(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("ADAFAT_LOG", "DEBUG")
        out = tmp_path / "dbg.json"
        code = main(
            [
                "simulate",
                "--m", "30", "--n", "20",
                "--reps", "1",
                "--seed", "2",
                "--methods", "ori",
                "--out", str(out),
            ]
        )
        assert code == 0

    def test_alpha_sign_flag(self, tmp_path):
        out = tmp_path / "pos.json"
        code = main(
            [
                "simulate",
                "--m", "40", "--n", "30",
                "--reps", "2",
                "--seed", "3",
                "--pi1", "0.2",
                "--alpha-sign", "positive",
                "--methods", "ori",
                "--out", str(out),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["config"]["alpha_sign"] == "positive"

    def test_config_file_roundtrip(self, tmp_path):
        out1 = tmp_path / "flags.json"
        assert main(
            [
                "simulate",
                "--m", "40", "--n", "30",
                "--reps", "2",
                "--seed", "5",
                "--pi1", "0.2",
                "--methods", "ori,ora",
                "--out", str(out1),
            ]
        ) == 0
        echo = json.loads(out1.read_text())["config"]
        cfg_path = tmp_path / "cell.json"
        cfg_path.write_text(json.dumps(echo))
        out2 = tmp_path / "fromfile.json"
        assert main(
            [
                "simulate",
                "--config", str(cfg_path),
                "--methods", "ori,ora",
                "--out", str(out2),
            ]
        ) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_missing_m_without_config_exits_2(self):
        assert main(["simulate", "--n", "30"]) == 2

    def test_jobs_flag_does_not_change_results(self, tmp_path):
        base = [
            "simulate",
            "--m", "40", "--n", "30",
            "--reps", "4",
            "--seed", "13",
            "--methods", "ori",
        ]
        out1 = tmp_path / "seq.json"
        out2 = tmp_path / "par.json"
        assert main(base + ["--out", str(out1), "--jobs", "1"]) == 0
        assert main(base + ["--out", str(out2), "--jobs", "2"]) == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestCmdCalibrate:
    def test_calibrate_writes_model_bundle(self, tmp_path, capsys):
        rng = np.random.default_rng(31)
        n, m = 120, 30
        x = 0.5 + rng.standard_normal((n, 1))
        Y = x @ rng.uniform(0.5, 1.5, (1, m)) + rng.standard_normal((n, m))
        y_path = tmp_path / "r.csv"
        x_path = tmp_path / "m.csv"
        np.savetxt(y_path, Y, delimiter=",")
        np.savetxt(x_path, x, delimiter=",")
        out = tmp_path / "calib"
        code = main(
            ["calibrate", "--returns", str(y_path), "--market", str(x_path), "--out", str(out)]
        )
        assert code == 0
        bundle = np.load(tmp_path / "calib.npz")
        assert bundle["alpha"].shape == (m,)
        payload = json.loads((tmp_path / "calib.json").read_text())
        assert payload["q_hat"] == int(bundle["q"])

    def test_missing_returns_exits_2(self, tmp_path):
        x_path = tmp_path / "m.csv"
        np.savetxt(x_path, np.random.default_rng(0).standard_normal((20, 1)), delimiter=",")
        code = main(
            ["calibrate", "--returns", str(tmp_path / "nope.csv"), "--market", str(x_path), "--out", str(tmp_path / "c")]
        )
        assert code == 2
