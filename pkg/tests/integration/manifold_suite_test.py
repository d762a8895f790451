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
        "../resources/integration/suite_manifold.yaml",
    )


class TestManifoldSuite(BaseExperimentTest):

    def test_no_error(self, exit_code):
        """Test that the suite runs to the end"""
        assert exit_code in (0, 2)
        assert "error" not in self.read_manifest()

    def test_graphs(self, exit_code):
        """Test the saddle graphs and their continuity in eta"""
        tags = ["0", "0p025", "0p05", "0p1"]
        self.assert_passed(
            [f"graph_zero_eta{tag}" for tag in tags]
            + [f"graph_stable_range_eta{tag}" for tag in tags]
            + ["graph_series", "graph_continuity_decreasing"]
        )

    def test_graph_report(self, exit_code):
        """Test that graph reports carry the sandwich radii and both rho values"""
        with open(os.path.join(self.out_dir, "graph_eta0.json")) as f:
            report = json.load(f)

        sandwich = report["sandwich"]
        assert 0.0 < sandwich["start_radius"] <= sandwich["delta_second"] * 1.000001
        assert report["rho_along_trace"] > 0.0
        assert report["smallness"]["rho"] > 0.0
