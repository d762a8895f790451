import json

import numpy as np
import pandas as pd

from nrds.export import (
    file_sha256,
    number_tag,
    package_versions,
    write_frame,
    write_json,
)


class TestNumberTag:

    def test_tags(self):
        """Test file-name renderings of numbers"""
        assert number_tag(0.05) == "0p05"
        assert number_tag(-2) == "m2"
        assert number_tag(0.0) == "0"
        assert number_tag(0.025) == "0p025"


class TestWriters:

    def test_json_layout(self, tmp_path):
        """Test sorted keys, numpy values and non-finite numbers"""
        data = {
            "b": np.float64(1.5),
            "a": [np.int64(2), np.bool_(True)],
            "c": float("inf"),
            "d": np.array([1.0, 2.0]),
        }

        path = write_json(data, str(tmp_path), "report.json")

        with open(path) as file:
            text = file.read()
        assert text.endswith("}\n")
        assert list(json.loads(text)) == ["a", "b", "c", "d"]
        assert json.loads(text) == {
            "a": [2, True],
            "b": 1.5,
            "c": "inf",
            "d": [1.0, 2.0],
        }

    def test_frame_precision(self, tmp_path):
        """Test that CSV tables keep every digit of a double"""
        frame = pd.DataFrame({"t": [0.1, 1.0 / 3.0]})

        path = write_frame(frame, str(tmp_path), "table.csv")

        loaded = pd.read_csv(path, float_precision="round_trip")

        assert loaded["t"].tolist() == [0.1, 1.0 / 3.0]

    def test_content_hash(self, tmp_path):
        """Test the file hash of a known content"""
        path = tmp_path / "empty.txt"
        path.write_bytes(b"")

        assert file_sha256(path) == (
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        )

    def test_versions(self):
        """Test that missing packages are reported instead of raising"""
        versions = package_versions(("numpy", "surely-not-a-package"))

        assert versions["surely-not-a-package"] == "not installed"
        assert versions["numpy"] != "not installed"
