import json
import shutil
import subprocess

import numpy as np
import pytest

from robustfolio.backtest import report_from_json
from robustfolio.cli import main
from robustfolio.market_data import load_returns

FAST = [
    "--horizon", "100", "--holding", "50", "--n-points", "2",
    "--bootstrap-draws", "25", "--bootstrap-block", "20",
    "--mixture-components", "2",
]


@pytest.fixture(scope="module")
def panel_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "panel.csv"
    rc = main(["synth", "--out", str(path), "--periods", "260", "--assets", "3",
               "--seed", "1"])
    assert rc == 0
    return path


def _read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = {line.split(",")[0]: line.split(",")[1:] for line in lines[1:]}
    return header, rows


class TestSynth:
    def test_writes_loadable_panel(self, panel_csv):
        panel = load_returns(str(panel_csv))
        assert panel.n_periods == 260
        assert panel.n_assets == 3

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["synth", "--out", str(a), "--seed", "9", "--periods", "50"]) == 0
        assert main(["synth", "--out", str(b), "--seed", "9", "--periods", "50"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["synth", "--out", str(a), "--seed", "1", "--periods", "50"])
        main(["synth", "--out", str(b), "--seed", "2", "--periods", "50"])
        assert a.read_bytes() != b.read_bytes()


class TestBacktest:
    def test_outputs(self, panel_csv, tmp_path):
        out = tmp_path / "run"
        rc = main(["backtest", "--input", str(panel_csv), "--models", "mv,cvar",
                   "--out-dir", str(out)] + FAST)
        assert rc == 0
        for name in ("report_mv.json", "report_cvar.json", "metrics_in.csv",
                     "metrics_out.csv", "composition.csv"):
            assert (out / name).exists(), name
        header, rows = _read_csv(out / "metrics_out.csv")
        assert header == ["metric", "mv", "cvar"]
        assert set(rows) == {
            "mean_return", "std_dev", "sharpe", "sortino", "omega",
            "cvar_90", "cvar_95", "cvar_99",
        }
        for cells in rows.values():
            for cell in cells:
                if cell:
                    float(cell)
        header, rows = _read_csv(out / "composition.csv")
        assert list(rows) == ["assets_held", "diversification", "turnover"]
        report = report_from_json((out / "report_mv.json").read_text())
        assert report.model_id == "mv"
        assert len(report.periods) == 3

    def test_rerun_is_byte_identical(self, panel_csv, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        args = ["backtest", "--input", str(panel_csv), "--models", "mv",
                "--seed", "3"] + FAST
        assert main(args + ["--out-dir", str(out1)]) == 0
        assert main(args + ["--out-dir", str(out2)]) == 0
        assert (out1 / "report_mv.json").read_bytes() == (out2 / "report_mv.json").read_bytes()
        assert (out1 / "metrics_out.csv").read_bytes() == (out2 / "metrics_out.csv").read_bytes()

    def test_unknown_model_exit_2(self, panel_csv, tmp_path):
        rc = main(["backtest", "--input", str(panel_csv), "--models", "mv,zz",
                   "--out-dir", str(tmp_path)] + FAST)
        assert rc == 2

    def test_missing_input_exit_3(self, tmp_path):
        rc = main(["backtest", "--input", str(tmp_path / "nope.csv"),
                   "--models", "mv", "--out-dir", str(tmp_path)] + FAST)
        assert rc == 3

    def test_malformed_csv_exit_3(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("date,A\n2020-01-01,zebra\n2020-01-02,0.1\n")
        rc = main(["backtest", "--input", str(bad), "--models", "mv",
                   "--out-dir", str(tmp_path)] + FAST)
        assert rc == 3

    def test_insufficient_history_exit_3(self, tmp_path):
        short = tmp_path / "short.csv"
        main(["synth", "--out", str(short), "--periods", "60", "--assets", "2"])
        rc = main(["backtest", "--input", str(short), "--models", "mv",
                   "--out-dir", str(tmp_path)] + FAST)
        assert rc == 3

    def test_config_file_with_flag_override(self, panel_csv, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "horizon": 100, "holding": 50, "n_points": 2,
            "bootstrap_draws": 25, "bootstrap_block": 20, "seed": 5,
        }))
        out = tmp_path / "run"
        rc = main(["backtest", "--input", str(panel_csv), "--models", "mv",
                   "--out-dir", str(out), "--config", str(cfg_path),
                   "--holding", "80"])
        assert rc == 0
        report = report_from_json((out / "report_mv.json").read_text())
        assert report.holding == 80        # flag beats file
        assert report.config["seed"] == 5  # file beats default

    def test_unknown_config_key_exit_2(self, panel_csv, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"horizon": 100, "window_size": 9}))
        rc = main(["backtest", "--input", str(panel_csv), "--models", "mv",
                   "--out-dir", str(tmp_path), "--config", str(cfg_path)])
        assert rc == 2

    def test_bad_betas_exit_2(self, panel_csv, tmp_path):
        rc = main(["backtest", "--input", str(panel_csv), "--models", "mv",
                   "--out-dir", str(tmp_path), "--betas", "a,b"] + FAST)
        assert rc == 2

    def test_allow_short_recorded(self, panel_csv, tmp_path):
        out = tmp_path / "run"
        rc = main(["backtest", "--input", str(panel_csv), "--models", "mv",
                   "--out-dir", str(out), "--allow-short"] + FAST)
        assert rc == 0
        report = report_from_json((out / "report_mv.json").read_text())
        assert report.config["long_only"] is False

    def test_flag_aliases(self, panel_csv, tmp_path):
        canonical, alias = tmp_path / "c", tmp_path / "a"
        common = ["backtest", "--input", str(panel_csv), "--models", "mv",
                  "--horizon", "100", "--bootstrap-draws", "25",
                  "--bootstrap-block", "20"]
        assert main(common + ["--out-dir", str(canonical), "--holding", "50",
                              "--n-points", "2", "--allow-short"]) == 0
        assert main(common + ["--out", str(alias), "--hold", "50",
                              "--points", "2", "--no-long-only"]) == 0
        assert (canonical / "report_mv.json").read_bytes() == \
            (alias / "report_mv.json").read_bytes()


class TestFrontier:
    def test_csv_layout(self, panel_csv, tmp_path):
        out = tmp_path / "frontier.csv"
        rc = main(["frontier", "--input", str(panel_csv), "--model", "mv",
                   "--out", str(out), "--n-points", "4",
                   "--bootstrap-draws", "25", "--bootstrap-block", "20"])
        assert rc == 0
        lines = out.read_text().splitlines()
        header = lines[0].split(",")
        assert header[:4] == ["param", "status", "mean", "std"]
        assert all(col.startswith("w_") for col in header[4:])
        assert len(lines) == 5  # header + 4 grid points
        for line in lines[1:]:
            cells = line.split(",")
            assert cells[1] == "ok"
            weights = [float(v) for v in cells[4:]]
            assert sum(weights) == pytest.approx(1.0, abs=1e-5)

    def test_unknown_model_exit_2(self, panel_csv, tmp_path):
        rc = main(["frontier", "--input", str(panel_csv), "--model", "nope",
                   "--out", str(tmp_path / "f.csv")])
        assert rc == 2

    def test_short_panel_exit_3(self, tmp_path):
        short = tmp_path / "short.csv"
        main(["synth", "--out", str(short), "--periods", "60", "--assets", "2"])
        rc = main(["frontier", "--input", str(short), "--model", "mv",
                   "--out", str(tmp_path / "f.csv"), "--horizon", "100"])
        assert rc == 3

    def test_unattainable_threshold_exit_4(self, panel_csv, tmp_path):
        rc = main(["frontier", "--input", str(panel_csv), "--model", "or",
                   "--out", str(tmp_path / "f.csv"), "--tau", "1.0",
                   "--bootstrap-draws", "25", "--bootstrap-block", "20"])
        assert rc == 4


@pytest.fixture(scope="module")
def run_dir(panel_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("reports")
    rc = main(["backtest", "--input", str(panel_csv),
               "--models", "mvbu,wcor,or", "--out-dir", str(out)] + FAST)
    assert rc == 0
    return out


class TestValidate:
    def test_coverage_only(self, panel_csv, run_dir, tmp_path):
        out = tmp_path / "validation.csv"
        rc = main(["validate", "--input", str(panel_csv), "--out", str(out),
                   str(run_dir / "report_mvbu.json")])
        assert rc == 0
        header, rows = _read_csv(out)
        assert header == ["metric", "mvbu"]
        assert rows["kind"] == ["frequency"]
        assert 0.0 <= float(rows["simulation_output"][0]) <= 1.0

    def test_gain_with_partner(self, panel_csv, run_dir, tmp_path):
        out = tmp_path / "validation.csv"
        rc = main(["validate", "--input", str(panel_csv), "--out", str(out),
                   str(run_dir / "report_wcor.json"),
                   str(run_dir / "report_or.json")])
        assert rc == 0
        header, rows = _read_csv(out)
        assert header == ["metric", "wcor"]
        assert rows["kind"] == ["gain"]
        assert -1.5 <= float(rows["simulation_output"][0]) <= 1.5

    def test_columns_ordered_when_mixed(self, panel_csv, run_dir, tmp_path):
        out = tmp_path / "validation.csv"
        rc = main(["validate", "--input", str(panel_csv), "--out", str(out),
                   str(run_dir / "report_wcor.json"),
                   str(run_dir / "report_or.json"),
                   str(run_dir / "report_mvbu.json")])
        assert rc == 0
        header, _ = _read_csv(out)
        assert header == ["metric", "mvbu", "wcor"]

    def test_missing_partner_exit_2(self, panel_csv, run_dir, tmp_path):
        rc = main(["validate", "--input", str(panel_csv),
                   "--out", str(tmp_path / "v.csv"),
                   str(run_dir / "report_wcor.json")])
        assert rc == 2

    def test_no_robust_report_exit_2(self, panel_csv, run_dir, tmp_path):
        rc = main(["validate", "--input", str(panel_csv),
                   "--out", str(tmp_path / "v.csv"),
                   str(run_dir / "report_or.json")])
        assert rc == 2

    def test_not_a_report_exit_2(self, panel_csv, tmp_path):
        rc = main(["validate", "--input", str(panel_csv),
                   "--out", str(tmp_path / "v.csv"), str(panel_csv)])
        assert rc == 2

    def test_missing_report_file_exit_3(self, panel_csv, tmp_path):
        rc = main(["validate", "--input", str(panel_csv),
                   "--out", str(tmp_path / "v.csv"),
                   str(tmp_path / "ghost.json")])
        assert rc == 3

    def test_wrong_panel_exit_2(self, run_dir, tmp_path):
        other = tmp_path / "other.csv"
        main(["synth", "--out", str(other), "--periods", "260", "--assets", "3",
              "--seed", "99"])
        rc = main(["validate", "--input", str(other),
                   "--out", str(tmp_path / "v.csv"),
                   str(run_dir / "report_mvbu.json")])
        assert rc == 2


def test_console_script_installed():
    exe = shutil.which("robustfolio")
    assert exe, "robustfolio entry point not on PATH"
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "backtest" in proc.stdout
