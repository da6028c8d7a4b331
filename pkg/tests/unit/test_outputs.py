"""
Tests for result file writing
"""
import json
import math

import numpy as np
import pandas as pd
import pytest
import tomli

from emission import outputs


class TestFileNames:

    def test_plain(self):
        assert outputs.data_file_name("fig3", "coupling_map", "map") == "fig3_coupling_map_map.csv"

    def test_sweep_tag(self):
        name = outputs.data_file_name("fig3", "coupling_map", "map", "xi", 0.5)
        assert name == "fig3_coupling_map_xi_5.000000e-01_map.csv"

    def test_suffix(self):
        assert outputs.data_file_name("run", "validity_report", "summary", suffix="json").endswith(".json")


class TestWriters:
    """Atomic CSV, JSON and TOML output"""

    def test_frame_format(self, tmp_path):
        frame = pd.DataFrame({"t": [0.0, 0.5], "population": [1.0, 1.0 / 3.0]})
        path = outputs.write_frame(frame, tmp_path / "nested" / "trace.csv")
        text = path.read_text(encoding="utf-8")
        assert text.splitlines()[0] == "t,population"
        assert "3.333333333333e-01" in text
        assert "\r" not in text

    def test_no_temporary_files_left(self, tmp_path):
        outputs.write_frame(pd.DataFrame({"a": [1.0]}), tmp_path / "a.csv")
        outputs.write_json({"a": 1}, tmp_path / "a.json")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["a.csv", "a.json"]

    def test_failed_write_keeps_previous_file(self, tmp_path):
        path = outputs.write_json({"a": 1}, tmp_path / "m.json")

        def broken(handle):
            handle.write("partial")
            raise OSError("disk full")

        with pytest.raises(OSError):
            outputs._atomic_write(path, broken)
        assert json.loads(path.read_text(encoding="utf-8")) == {"a": 1}
        assert [p.name for p in tmp_path.iterdir()] == ["m.json"]

    def test_json_is_sorted_and_deterministic(self, tmp_path):
        data = {"b": np.float64(0.25), "a": np.arange(3), "c": {"z": np.bool_(True), "y": 1 + 2j}}
        first = outputs.write_json(data, tmp_path / "one.json").read_text(encoding="utf-8")
        second = outputs.write_json(data, tmp_path / "two.json").read_text(encoding="utf-8")
        assert first == second
        loaded = json.loads(first)
        assert list(loaded) == ["a", "b", "c"]
        assert loaded["a"] == [0, 1, 2]
        assert loaded["c"] == {"y": [1.0, 2.0], "z": True}

    def test_non_finite_values(self):
        assert outputs.to_jsonable([math.nan, math.inf, 1.5]) == ["nan", "inf", 1.5]

    def test_spec_file(self, tmp_path):
        data = {"physical": {"rabi": 0.01, "laser_direction": [0.0, 0.0, 1.0]}, "experiment": {"name": "directional"}}
        path = outputs.write_spec_file(data, tmp_path / "demo.toml")
        assert tomli.loads(path.read_text(encoding="utf-8")) == data

    def test_package_versions(self):
        versions = outputs.package_versions()
        assert set(versions) == set(outputs.VERSIONED_PACKAGES)
        assert versions["numpy"] != "not installed"
