import textwrap

import pytest

from nrds.config import load_config, load_experiment, validate, validate_config
from nrds.errors import ConfigError

VALID = """\
scenario: cubic1d
etas: [0.1, 0.05, 0]
seeds: [0, 1]
t_anchors: [-2, 0]
numeric:
  dt: 0.01
  T_back: 8
  T_h: 10
  eps_cluster: 0.02
  grid_n: 9
checks: [attractor, driver]
out_dir: results
"""


def write_config(tmp_path, text, name="config.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


class TestLoadConfig:

    def test_missing_file(self, tmp_path):
        """Test that a missing configuration file raises FileNotFoundError"""
        path = tmp_path / "missing.yaml"

        with pytest.raises(FileNotFoundError, match="not found"):
            load_config(str(path))

    def test_syntax_error(self, tmp_path):
        """Test that YAML syntax errors are reported with their line"""
        path = write_config(tmp_path, "scenario: cubic1d\netas: [0.1\n")

        with pytest.raises(ConfigError) as error:
            load_config(path)
        assert error.value.diagnostics[0].startswith("line ")


class TestValidateConfig:

    def test_valid_file(self, tmp_path):
        """Test defaults, ordering and path resolution of a valid file"""
        config = load_experiment(write_config(tmp_path, VALID))

        assert config.etas == (0.1, 0.05, 0.0)
        assert config.seeds == (0, 1)
        assert config.numeric.path_dt == 0.005
        assert config.numeric.T_trunc == 30.0
        assert config.ordered_checks == ("driver", "attractor")
        assert config.out_dir == str(tmp_path / "results")
        assert validate(write_config(tmp_path, VALID)) == []

    def test_missing_key_names_line(self, tmp_path):
        """Test that a missing numeric key is reported at its section"""
        text = VALID.replace("  dt: 0.01\n", "")

        diagnostics = validate(write_config(tmp_path, text))

        assert diagnostics == ["line 5: numeric.dt: missing required key"]

    def test_eta_range(self, tmp_path):
        """Test that noise amplitudes must lie in [0, 1]"""
        text = VALID.replace("etas: [0.1, 0.05, 0]", "etas: [0.1, -0.1]")

        diagnostics = validate(write_config(tmp_path, text))

        assert diagnostics == ["line 2: etas: entry -0.1 lies outside [0.0, 1.0]"]

    def test_all_problems_reported(self, tmp_path):
        """Test that several problems are collected in one pass"""
        text = (
            VALID.replace("  dt: 0.01\n", "")
            .replace("etas: [0.1, 0.05, 0]", "etas: [-0.5]")
            .replace("grid_n: 9", "grid_n: 2.5")
        ) + "colour: blue\n"

        diagnostics = validate(write_config(tmp_path, text))

        keys = [diagnostic.split(": ")[1] for diagnostic in diagnostics]
        assert set(keys) == {"colour", "etas", "numeric.dt", "numeric.grid_n"}

    def test_unknown_scenario(self):
        """Test that scenarios are checked against the catalog"""
        raw = {
            "scenario": "lorenz",
            "etas": [0.1],
            "seeds": [0],
            "t_anchors": [0],
            "numeric": {
                "dt": 0.01,
                "T_back": 8,
                "T_h": 10,
                "eps_cluster": 0.02,
                "grid_n": 9,
            },
            "checks": ["driver"],
            "out_dir": "out",
        }

        with pytest.raises(ConfigError, match="unknown scenario"):
            validate_config(raw)

    def test_wave_needs_modes(self, tmp_path):
        """Test that the wave scenario requires N_modes and its own suites"""
        text = VALID.replace("scenario: cubic1d", "scenario: wave")

        diagnostics = validate(write_config(tmp_path, text))

        assert "line 5: numeric.N_modes: missing required key" in diagnostics
        assert any("'attractor' does not apply to wave" in d for d in diagnostics)

    def test_wave_section_only_for_wave(self, tmp_path):
        """Test that wave options are rejected for ODE scenarios"""
        text = VALID + "wave:\n  beta: 1.0\n"

        diagnostics = validate(write_config(tmp_path, text))

        assert diagnostics == ["line 13: wave: only allowed for scenario wave"]

    def test_path_step_divides_step(self, tmp_path):
        """Test that the driver step must divide the integration step"""
        text = VALID.replace("  dt: 0.01\n", "  dt: 0.01\n  path_dt: 0.003\n")

        diagnostics = validate(write_config(tmp_path, text))

        assert diagnostics == ["line 7: numeric.path_dt: must divide dt"]

    def test_hash_ignores_output_location(self, tmp_path):
        """Test that the configuration hash does not depend on out_dir"""
        first = load_experiment(write_config(tmp_path, VALID, "a.yaml"))
        second = load_experiment(
            write_config(tmp_path, VALID.replace("results", "elsewhere"), "b.yaml")
        )

        assert first.out_dir != second.out_dir
        assert first.config_hash() == second.config_hash()
        assert "out_dir" not in first.to_dict()
