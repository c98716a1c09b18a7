import json
import math
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from ac_forecast.errors import DataFormatError
from ac_forecast.storage.storage import (
    DEFAULT_OUTPUT_DIR,
    ResultStore,
    dumps,
    load_json,
    load_settings,
    to_jsonable,
)


class TestResultStore:
    """Test cases for the ResultStore class."""

    def test_explicit_directory(self, output_dir):
        """Test an explicit directory is created."""
        store = ResultStore(output_dir)
        assert store.output_dir == output_dir
        assert output_dir.is_dir()

    def test_directory_from_environment(self, tmp_path):
        """Test AC_FORECAST_OUTPUT_DIR is used without an explicit directory."""
        target = tmp_path / "env"
        with patch.dict("os.environ", {"AC_FORECAST_OUTPUT_DIR": str(target)}):
            store = ResultStore()
        assert store.output_dir == target

    def test_default_directory(self, tmp_path, monkeypatch):
        """Test the working-directory fallback."""
        monkeypatch.chdir(tmp_path)
        with patch.dict("os.environ", {}, clear=True):
            store = ResultStore()
        assert store.output_dir == Path.cwd() / DEFAULT_OUTPUT_DIR

    def test_unwritable_directory(self, output_dir):
        """Test an unwritable directory is rejected."""
        with patch.object(ResultStore, "_is_writable", return_value=False):
            with pytest.raises(DataFormatError):
                ResultStore(output_dir)

    def test_mkdir_failure(self, output_dir):
        """Test directory creation errors are wrapped."""
        with patch("pathlib.Path.mkdir", side_effect=PermissionError("denied")):
            with pytest.raises(DataFormatError):
                ResultStore(output_dir)

    def test_save_json(self, output_dir):
        """Test JSON output is sorted and NaN-free."""
        store = ResultStore(output_dir)
        path = store.save_json("report.json", {"b": math.nan, "a": np.float64(1.5)})
        text = path.read_text()
        assert json.loads(text) == {"a": 1.5, "b": None}
        assert text.index('"a"') < text.index('"b"')

    def test_jsonl_round_trip(self, output_dir):
        """Test JSON lines are written one record per line."""
        store = ResultStore(output_dir)
        records = [{"series_id": "H1", "ok": True}, {"series_id": "H2", "ok": False}]
        path = store.save_jsonl("results.jsonl", records)
        assert len(path.read_text().splitlines()) == 2
        assert store.load_jsonl("results.jsonl") == records

    def test_load_jsonl_missing(self, output_dir):
        """Test reading an absent file is reported."""
        with pytest.raises(DataFormatError):
            ResultStore(output_dir).load_jsonl("absent.jsonl")

    def test_save_frame_precision(self, output_dir):
        """Test CSV floats keep full precision."""
        store = ResultStore(output_dir)
        path = store.save_frame("values.csv", pd.DataFrame({"x": [0.1 + 0.2]}))
        assert path.read_text().splitlines() == ["x", "0.30000000000000004"]

    def test_save_text(self, output_dir):
        """Test plain text is written as given."""
        path = ResultStore(output_dir).save_text("summary.txt", "line\n")
        assert path.read_text() == "line\n"

    def test_get_storage_info(self, output_dir):
        """Test the storage description."""
        info = ResultStore(output_dir).get_storage_info()
        assert info == {
            "output_dir": str(output_dir),
            "output_dir_exists": True,
            "output_dir_writable": True,
        }


class TestJsonHelpers:
    """Test cases for the JSON helpers."""

    def test_to_jsonable(self):
        """Test numpy values and non-finite floats are converted."""
        data = {1: np.array([1.0, np.inf]), "flag": np.bool_(True), "n": np.int64(3), "t": (0.5,)}
        assert to_jsonable(data) == {"1": [1.0, None], "flag": True, "n": 3, "t": [0.5]}

    def test_dumps_compact(self):
        """Test compact output without indentation."""
        assert dumps({"b": 1, "a": [1, 2]}, indent=None) == '{"a": [1, 2], "b": 1}'

    def test_load_json_invalid(self, tmp_path):
        """Test invalid JSON is reported."""
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(DataFormatError):
            load_json(path)

    def test_load_json_missing(self, tmp_path):
        """Test a missing file is reported."""
        with pytest.raises(DataFormatError):
            load_json(tmp_path / "absent.json")


class TestLoadSettings:
    """Test cases for load_settings."""

    defaults = {"lr0": 0.05, "max_epochs": 200}

    def test_no_path(self):
        """Test defaults are returned as a copy."""
        settings = load_settings(None, self.defaults)
        assert settings == self.defaults
        assert settings is not self.defaults

    def test_merge(self, tmp_path):
        """Test file values override defaults."""
        path = tmp_path / "settings.json"
        path.write_text(json.dumps({"max_epochs": 5}))
        assert load_settings(path, self.defaults) == {"lr0": 0.05, "max_epochs": 5}

    def test_unknown_key(self, tmp_path):
        """Test unknown keys are rejected."""
        path = tmp_path / "settings.json"
        path.write_text(json.dumps({"epochs": 5}))
        with pytest.raises(DataFormatError):
            load_settings(path, self.defaults)

    def test_not_an_object(self, tmp_path):
        """Test a JSON array is rejected."""
        path = tmp_path / "settings.json"
        path.write_text("[1, 2]")
        with pytest.raises(DataFormatError):
            load_settings(path, self.defaults)
