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
        "../resources/integration/experiment_failing.yaml",
    )


class TestFailingExperiment(BaseExperimentTest):

    def test_exit_code(self, exit_code):
        """Test that a failed check exits with 2"""
        assert exit_code == 2

    def test_manifest(self, exit_code):
        """Test that the manifest records the failed convergence check"""
        manifest = self.run_hash_comparison()
        failed = [c["name"] for c in manifest["checks"] if not c["passed"]]

        assert manifest["status"] == "FAILED"
        assert "pullback_converged" in failed
