import json
import os

import pandas as pd
import pytest
import yaml

from main import main
from nrds.export import file_sha256


class BaseExperimentTest:
    CONFIG_PATH = None  # Will be set by test

    @pytest.fixture(scope="class")
    def test_config(self, conf_path, tmp_path_factory):
        with open(conf_path) as f:
            config = yaml.safe_load(f)
        config["out_dir"] = str(tmp_path_factory.mktemp("data") / "output")
        temp_config_path = tmp_path_factory.mktemp("data") / "patched_config.yaml"
        with open(temp_config_path, "w") as f:
            yaml.safe_dump(config, f)
        yield str(temp_config_path)

    @pytest.fixture(scope="class")
    def exit_code(self, test_config):
        return main(["run", test_config])

    @pytest.fixture(autouse=True)
    def _inject_config(self, test_config):
        self.CONFIG_PATH = test_config

    @property
    def out_dir(self):
        with open(self.CONFIG_PATH) as f:
            return yaml.safe_load(f)["out_dir"]

    def read_manifest(self):
        with open(os.path.join(self.out_dir, "manifest.json")) as f:
            return json.load(f)

    def read_frame(self, name):
        return pd.read_csv(
            os.path.join(self.out_dir, name), float_precision="round_trip"
        )

    def run_hash_comparison(self):
        manifest = self.read_manifest()
        for entry in manifest["files"]:
            path = os.path.join(self.out_dir, entry["name"])
            assert os.path.exists(path), f"{entry['name']} listed but missing"
            assert file_sha256(path) == entry["sha256"], entry["name"]
        return manifest

    def read_checks(self):
        return {c["name"]: c["passed"] for c in self.read_manifest()["checks"]}

    def assert_passed(self, names):
        checks = self.read_checks()
        missing = [name for name in names if name not in checks]
        failed = [name for name in names if name in checks and not checks[name]]
        assert not missing, f"checks not run: {missing}"
        assert not failed, f"checks failed: {failed}"
