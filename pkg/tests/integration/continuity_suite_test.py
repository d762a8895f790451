import json
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
        "../resources/integration/suite_continuity.yaml",
    )


class TestContinuitySuite(BaseExperimentTest):

    def test_no_error(self, exit_code):
        """Test that the suite runs to the end"""
        assert exit_code in (0, 2)
        assert "error" not in self.read_manifest()

    def test_sweeps(self, exit_code):
        """Test the reference rows and the decrease of dH on both paths"""
        self.assert_passed(
            [f"self_row_seed{seed}" for seed in (3, 4)]
            + [f"dH_decreasing_seed{seed}" for seed in (3, 4)]
        )

    def test_tables(self, exit_code):
        """Test the joined sweep table and the recorded assumption"""
        table = self.read_frame("continuity_max.csv")
        with open(os.path.join(self.out_dir, "continuity_assumptions.json")) as f:
            assumptions = json.load(f)

        assert sorted(table["seed"].unique()) == [3, 4]
        assert sorted(table["eta"].unique()) == [0.0, 0.05, 0.1, 0.2]
        assert "compactness" in assumptions["untested_hypothesis"]
        assert assumptions["largest_coordinate"] <= 2.0
