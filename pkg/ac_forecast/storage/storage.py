"""Result and configuration storage for ac_forecast.

Resolves the output directory, loads JSON configuration merged over
defaults, and writes experiment artifacts with deterministic formatting.
"""

import json
import logging
import math
import os
import pathlib
from typing import Any

import numpy as np
import pandas as pd

from ac_forecast.errors import DataFormatError

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_DIR = "ac_forecast_results"


def to_jsonable(value: Any) -> Any:
    """Convert numpy values and non-finite floats into plain JSON values.

    NaN and infinities become ``None``.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def dumps(data: Any, indent: int | None = 2) -> str:
    """Serialize with sorted keys; NaN is written as ``null``."""
    return json.dumps(to_jsonable(data), indent=indent, sort_keys=True, allow_nan=False)


def load_json(path: str | pathlib.Path) -> Any:
    """Read a JSON file.

    Raises:
        DataFormatError: If the file is missing or not valid JSON.

    """
    path = pathlib.Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise DataFormatError(f"File {path} does not exist") from exc
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"Cannot read JSON from {path}: {exc}") from exc


def load_settings(path: str | pathlib.Path | None, defaults: dict[str, Any]) -> dict[str, Any]:
    """Load a JSON object and merge it over ``defaults``.

    Raises:
        DataFormatError: If the file does not hold a JSON object or names
            keys absent from ``defaults``.

    """
    if path is None:
        return dict(defaults)
    loaded = load_json(path)
    if not isinstance(loaded, dict):
        raise DataFormatError(f"Settings file {path} must hold a JSON object")
    unknown = sorted(set(loaded) - set(defaults))
    if unknown:
        raise DataFormatError(f"Unknown settings in {path}: {', '.join(unknown)}")
    return {**defaults, **loaded}


class ResultStore:
    """Output directory for experiment and CLI artifacts."""

    def __init__(self, output_dir: str | pathlib.Path | None = None):
        """Initialize the store.

        Args:
            output_dir: Target directory. Falls back to ``AC_FORECAST_OUTPUT_DIR``
                and then ``./ac_forecast_results``.

        """
        self._output_dir = self._get_output_directory(output_dir)
        self._ensure_output_directory()

    @staticmethod
    def _get_output_directory(output_dir: str | pathlib.Path | None) -> pathlib.Path:
        if output_dir is not None:
            return pathlib.Path(output_dir)
        if os.environ.get("AC_FORECAST_OUTPUT_DIR"):
            return pathlib.Path(os.environ["AC_FORECAST_OUTPUT_DIR"])
        return pathlib.Path.cwd() / DEFAULT_OUTPUT_DIR

    def _ensure_output_directory(self):
        try:
            self._output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataFormatError(f"Cannot create output directory {self._output_dir}: {exc}") from exc
        if not self._is_writable(self._output_dir):
            raise DataFormatError(f"Output directory {self._output_dir} is not writable")

    @property
    def output_dir(self) -> pathlib.Path:
        return self._output_dir

    def path(self, name: str) -> pathlib.Path:
        return self._output_dir / name

    def save_json(self, name: str, data: Any) -> pathlib.Path:
        """Write one JSON document."""
        target = self.path(name)
        target.write_text(dumps(data) + "\n", encoding="utf-8")
        return target

    def save_jsonl(self, name: str, records: list[Any]) -> pathlib.Path:
        """Write one compact JSON object per line."""
        target = self.path(name)
        lines = [dumps(record, indent=None) for record in records]
        target.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return target

    def save_frame(self, name: str, frame: pd.DataFrame) -> pathlib.Path:
        """Write a table as CSV with round-trip float precision."""
        target = self.path(name)
        frame.to_csv(target, index=False, float_format="%.17g")
        return target

    def save_text(self, name: str, text: str) -> pathlib.Path:
        target = self.path(name)
        target.write_text(text, encoding="utf-8")
        return target

    def load_jsonl(self, name: str) -> list[Any]:
        """Read back a JSON-lines file written by ``save_jsonl``."""
        target = self.path(name)
        try:
            lines = target.read_text(encoding="utf-8").splitlines()
            return [json.loads(line) for line in lines if line.strip()]
        except (OSError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"Cannot read {target}: {exc}") from exc

    def get_storage_info(self) -> dict[str, Any]:
        """Describe the output location."""
        return {
            "output_dir": str(self._output_dir),
            "output_dir_exists": self._output_dir.exists(),
            "output_dir_writable": self._is_writable(self._output_dir),
        }

    @staticmethod
    def _is_writable(path: pathlib.Path) -> bool:
        """Check if a directory is writable."""
        try:
            test_file = path / ".write_test"
            test_file.write_text("test")
            test_file.unlink()
            return True
        except OSError:
            return False
