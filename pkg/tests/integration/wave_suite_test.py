import os

import pytest

from definitions import ROOT_DIR

from .experiment_test_base import BaseExperimentTest


@pytest.fixture(scope="session")
def conf_path():
    return os.path.join(
        ROOT_DIR,
        "tests",
        "integration",
        "../resources/integration/suite_wave.yaml",
    )


class TestWaveSuite(BaseExperimentTest):

    def test_no_error(self, exit_code):
        """Test that the suite runs to the end"""
        assert exit_code in (0, 2)
        assert "error" not in self.read_manifest()

    def test_wave_checks(self, exit_code):
        """Test the Galerkin, energy, damping and decay checks"""
        self.assert_passed(
            [
                "mode_eigenvalues",
                "energy_nonincreasing",
                "equilibria_residual",
                "damping_floor_eta0",
                "damping_floor_eta0p1",
                "splitting_eta0",
                "splitting_eta0p1",
                "decay_monotone_eta0p1",
            ]
        )

    def test_decay_table(self, exit_code):
        """Test that noise does not slow the fitted decay"""
        decay = self.read_frame("decay_split.csv").set_index("eta")

        assert decay.loc[0.1, "alpha"] >= 0.95 * decay.loc[0.0, "alpha"]
