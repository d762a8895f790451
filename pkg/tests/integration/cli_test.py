import os

from definitions import ROOT_DIR
from main import main

INVALID_CONFIG = os.path.join(
    ROOT_DIR, "tests", "resources", "integration", "experiment_invalid.yaml"
)


class TestCli:

    def test_list(self, capsys):
        """Test that list prints every scenario with the topic it illustrates"""
        assert main(["list"]) == 0

        output = capsys.readouterr().out
        assert "cubic1d (conjugation example): " in output
        assert "gradient2d (gradient structure example): " in output
        assert "saddle2d (unstable set continuity): " in output
        assert "wave (damped wave application): " in output

    def test_validate_reports_all_problems(self, capsys):
        """Test that validate names the missing step and the negative eta"""
        assert main(["validate", INVALID_CONFIG]) == 1

        output = capsys.readouterr().out
        assert "numeric.dt: missing required key" in output
        assert "etas: entry -0.1 lies outside [0.0, 1.0]" in output

    def test_run_rejects_invalid_config(self, capsys):
        """Test that run stops with 1 before computing anything"""
        assert main(["run", INVALID_CONFIG]) == 1

        assert "Error during processing" in capsys.readouterr().out

    def test_validate_missing_file(self, tmp_path, capsys):
        """Test that a missing configuration file is reported"""
        assert main(["validate", str(tmp_path / "missing.yaml")]) == 1

    def test_shipped_config_is_valid(self, capsys):
        """Test that the example configuration passes validation"""
        assert main(["validate", os.path.join(ROOT_DIR, "config.yaml")]) == 0
