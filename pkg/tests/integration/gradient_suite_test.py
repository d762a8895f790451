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
        "../resources/integration/suite_gradient.yaml",
    )


class TestGradientSuite(BaseExperimentTest):

    def test_no_error(self, exit_code):
        """Test that the suite runs to the end"""
        assert exit_code in (0, 2)
        assert "error" not in self.read_manifest()

    def test_digraph(self, exit_code):
        """Test that the digraph is acyclic and survives the noise"""
        self.assert_passed(
            [
                "acyclic_eta0",
                "acyclic_eta0p05",
                "classified_eta0",
                "classified_eta0p05",
                "same_digraph_eta0p05",
            ]
        )

    def test_connections_file(self, exit_code):
        """Test the exported edges and the scope of the acyclicity claim"""
        with open(os.path.join(self.out_dir, "connections_eta0p05.json")) as f:
            report = json.load(f)

        assert report["edges"] == [[1, 0], [1, 2]]
        assert "homoclinic" in report["scope"]
