"""
Tests for the ferrolab command line tool.
"""
import json
import sys

import pandas as pd
import pytest
from typer.testing import CliRunner

from ferrolab.main import app, build_bench, main

runner = CliRunner()

CLEAN_SCRIPT = "let i = 0\nwhile i < 2 {\n    i = i + 1\n    bias 3.3; wait 1; measure\n    save i, ZC22\n}\nbias 0\n"


def manifest(out):
    return json.loads((out / "manifest.json").read_text(encoding="utf-8"))


class TestCheckCommand:
    """Tests for the check command."""

    def test_clean(self, tmp_path):
        """Test that a clean script exits 0 with an empty report."""
        script = tmp_path / "clean.ffx"
        script.write_text(CLEAN_SCRIPT, encoding="utf-8")
        result = runner.invoke(app, ["check", str(script), "--pretty"])
        assert result.exit_code == 0
        assert "0 errors, 0 warnings" in result.output
        assert "while i < 2.0 {" in result.output

    def test_errors(self, tmp_path):
        """Test that check errors exit 2 and name the code."""
        script = tmp_path / "bad.ffx"
        script.write_text("bias 12\n", encoding="utf-8")
        result = runner.invoke(app, ["check", str(script)])
        assert result.exit_code == 2
        assert "BiasOutOfRange" in result.output
        assert "1 errors, 0 warnings" in result.output

    def test_syntax_error(self, tmp_path):
        """Test that a script that does not parse exits 2."""
        script = tmp_path / "broken.ffx"
        script.write_text("repeat 3 { measure\n", encoding="utf-8")
        result = runner.invoke(app, ["check", str(script)])
        assert result.exit_code == 2
        assert "end of input" in result.output


class TestRunCommand:
    """Tests for the run command."""

    def test_run(self, tmp_path, temp_output_dir):
        """Test that saved rows, the log and the manifest are written."""
        script = tmp_path / "ramp.ffx"
        script.write_text(CLEAN_SCRIPT, encoding="utf-8")
        result = runner.invoke(app, ["run", str(script), "--out", str(temp_output_dir), "--no-chaos"])
        assert result.exit_code == 0, result.output
        rows = pd.read_csv(temp_output_dir / "ramp.csv")
        assert list(rows.columns) == ["i", "ZC22"]
        assert rows["i"].tolist() == [1.0, 2.0]
        log = pd.read_csv(temp_output_dir / "ramp_log.csv")
        assert len(log) == 2
        info = manifest(temp_output_dir)
        assert info["status"] == "ok"
        assert info["command"] == "run"
        assert {"ramp.csv", "ramp_log.csv"} <= set(info["outputs"])

    def test_runtime_failure(self, tmp_path, temp_output_dir):
        """Test that a failing script exits 2 and marks the manifest."""
        script = tmp_path / "fail.ffx"
        script.write_text("let v = 20\nbias v\n", encoding="utf-8")
        result = runner.invoke(app, ["run", str(script), "--out", str(temp_output_dir)])
        assert result.exit_code == 2
        assert manifest(temp_output_dir)["status"] == "failed"
        assert (temp_output_dir / "fail_log.csv").exists()


class TestExperimentCommands:
    """Tests for the experiment subcommands."""

    def test_hysteresis(self, temp_output_dir):
        """Test a one-loop sweep over the default range."""
        result = runner.invoke(app, ["experiment", "hysteresis", "--loops", "1", "--no-chaos",
                                     "--out", str(temp_output_dir)])
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(temp_output_dir / "hysteresis.csv")
        assert len(frame) == 2 * 76 + 1
        loops = pd.read_csv(temp_output_dir / "hysteresis_loops.csv")
        assert loops["indicator"].tolist() == ["ZC11", "ZC22"]
        info = manifest(temp_output_dir)
        assert info["status"] == "ok"
        assert info["sim_end"] > info["sim_start"]

        analyzed = runner.invoke(app, ["analyze", "loops", str(temp_output_dir / "hysteresis.csv"), "--loops", "1",
                                       "--out", str(temp_output_dir / "analysis")])
        assert analyzed.exit_code == 0, analyzed.output
        assert len(pd.read_csv(temp_output_dir / "analysis" / "loops.csv")) == 1

    def test_hysteresis_help_row_count(self):
        """Test that the help text states the shared-boundary row count."""
        result = runner.invoke(app, ["experiment", "hysteresis", "--help"])
        assert result.exit_code == 0
        assert "7601" in result.output

    def test_seed_determinism(self, tmp_path):
        """Test that the same seed writes byte-identical results."""
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            result = runner.invoke(app, ["experiment", "hysteresis", "--loops", "1", "--step", "0.2",
                                         "--seed", "3", "--chaos", "--out", str(out)])
            assert result.exit_code == 0, result.output
            outputs.append((out / "hysteresis.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_settle_with_plot(self, temp_output_dir):
        """Test the settle run and its chart."""
        result = runner.invoke(app, ["experiment", "settle", "--charge", "5", "--duration", "5", "--no-chaos",
                                     "--plot", "--out", str(temp_output_dir)])
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(temp_output_dir / "settle.csv")
        assert len(frame) == 5
        assert (frame["bias_v"] == 0.0).all()
        assert (temp_output_dir / "settle.svg").read_text(encoding="utf-8").lstrip().startswith("<?xml")

    def test_precondition_exit(self, temp_output_dir):
        """Test that an invalid sweep range exits 2."""
        result = runner.invoke(app, ["experiment", "hysteresis", "--step", "0.3", "--out", str(temp_output_dir)])
        assert result.exit_code == 2
        assert "PreconditionError" in result.output

    def test_calibrate_round_trip(self, tmp_path):
        """Test that the written parameter file rebuilds the same device."""
        out = tmp_path / "cal"
        result = runner.invoke(app, ["calibrate", "--samples", "5", "--drive", "2", "--seed", "4", "--out", str(out)])
        assert result.exit_code == 0, result.output
        calibration = pd.read_csv(out / "calibration.csv")
        assert calibration["rate_pos_ohm_per_s"].iloc[0] > 0
        assert calibration["rate_neg_ohm_per_s"].iloc[0] < 0

        bench = build_bench(config_file=out / "device.params")
        assert bench.params == build_bench(seed=4, chaos=True).params
        assert bench.sweep().zc22 == pytest.approx(calibration["zc22"].iloc[0])


class TestPrcCommands:
    """Tests for the reservoir commands."""

    def test_serve_missing_model(self, temp_output_dir):
        """Test that serving a missing model exits 2."""
        result = runner.invoke(app, ["prc-serve", "--model", str(temp_output_dir / "none.bin"),
                                     "--out", str(temp_output_dir)])
        assert result.exit_code == 2
        assert "ModelNotFound" in result.output
        assert manifest(temp_output_dir)["status"] == "failed"

    def test_train_and_stream(self, prc_samples, tmp_path):
        """Test training from a sample file and a loopback streaming session."""
        from ferrolab.reservoir import write_samples

        samples = write_samples(prc_samples, tmp_path / "samples.csv")
        trained = runner.invoke(app, ["prc-train", str(samples), "--epochs", "300", "--out", str(tmp_path / "train")])
        assert trained.exit_code == 0, trained.output
        model = tmp_path / "train" / "model.bin"
        assert model.exists()

        session = tmp_path / "session"
        streamed = runner.invoke(app, ["prc-stream", "--model", str(model), "--count", "3", "--no-chaos",
                                       "--out", str(session)])
        assert streamed.exit_code == 0, streamed.output
        frame = pd.read_csv(session / "session.csv")
        assert frame["seq"].tolist() == [0, 1, 2]
        assert frame["predicted"].between(0, 3).all()
        assert (session / "confusion.csv").exists()


class TestAnalyzeCommands:
    """Tests for the analyze subcommands."""

    def test_stats(self, tmp_path):
        """Test summary statistics and the detection threshold."""
        path = tmp_path / "finals.csv"
        path.write_text("zc22\n10\n20\n30\n", encoding="utf-8")
        result = runner.invoke(app, ["analyze", "stats", str(path), "--bins", "3", "--out", str(tmp_path / "o")])
        assert result.exit_code == 0, result.output
        assert "Detection threshold: 15.0000" in result.output
        assert pd.read_csv(tmp_path / "o" / "histogram.csv")["count"].tolist() == [1, 1, 1]

    def test_missing_column(self, tmp_path):
        """Test that an absent column exits 2."""
        path = tmp_path / "finals.csv"
        path.write_text("other\n1\n", encoding="utf-8")
        result = runner.invoke(app, ["analyze", "stats", str(path), "--out", str(tmp_path / "o")])
        assert result.exit_code == 2

    def test_confusion(self, tmp_path):
        """Test the confusion matrix of an inference log, unlabelled rows skipped."""
        path = tmp_path / "inference.csv"
        path.write_text("seq,label,predicted,score\n0,0,0,0.0\n1,1,2,0.6\n2,,3,1.0\n", encoding="utf-8")
        result = runner.invoke(app, ["analyze", "confusion", str(path), "--out", str(tmp_path / "o")])
        assert result.exit_code == 0, result.output
        matrix = pd.read_csv(tmp_path / "o" / "confusion.csv")
        assert len(matrix) == 4
        assert "50.0%" in result.output


class TestMain:
    """Tests for the exit codes of the main entry point."""

    def test_usage_error(self, monkeypatch):
        """Test that a malformed option exits 1."""
        monkeypatch.setattr(sys, "argv", ["ferrolab", "experiment", "hysteresis", "--loops", "many"])
        with pytest.raises(SystemExit) as info:
            main()
        assert info.value.code == 1

    def test_failure(self, monkeypatch, temp_output_dir):
        """Test that a failing command exits 2."""
        monkeypatch.setattr(sys, "argv", ["ferrolab", "prc-serve", "--model", str(temp_output_dir / "none.bin"),
                                          "--out", str(temp_output_dir)])
        with pytest.raises(SystemExit) as info:
            main()
        assert info.value.code == 2

    def test_success(self, monkeypatch, tmp_path):
        """Test that a successful command exits 0."""
        script = tmp_path / "clean.ffx"
        script.write_text(CLEAN_SCRIPT, encoding="utf-8")
        monkeypatch.setattr(sys, "argv", ["ferrolab", "check", str(script)])
        with pytest.raises(SystemExit) as info:
            main()
        assert info.value.code == 0
