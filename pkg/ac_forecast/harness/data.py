"""Experiment data sources: M4 Hourly files and simulated SARI realizations."""

import logging
from pathlib import Path

import numpy as np

from ac_forecast.ensemble.ensemble import DEFAULT_SPLIT_FRACTION, TimeSeries
from ac_forecast.ensemble.io import read_series_csv
from ac_forecast.errors import DataFormatError
from ac_forecast.sari.model import SariParams, SariSpec, simulate

logger = logging.getLogger(__name__)

M4_HOURLY_FILES = ("Hourly-train.csv", "hourly-train.csv", "Hourly.csv")


def load_m4_hourly(
    path: str | Path,
    split_fraction: float = DEFAULT_SPLIT_FRACTION,
) -> list[TimeSeries]:
    """Load M4 Hourly series from a CSV file or a directory holding one.

    Raises:
        DataFormatError: If no M4 Hourly file is found or a row is malformed.

    """
    path = Path(path)
    if path.is_dir():
        candidates = [path / name for name in M4_HOURLY_FILES if (path / name).is_file()]
        if not candidates:
            raise DataFormatError(f"No M4 Hourly CSV found in {path}")
        path = candidates[0]
    if not path.is_file():
        raise DataFormatError(f"Series file {path} does not exist")
    series = read_series_csv(path, split_fraction=split_fraction)
    logger.info("Loaded %d series from %s", len(series), path)
    return series


def synth_dgp(
    spec: SariSpec,
    params: SariParams,
    length: int,
    seed: int,
    count: int,
    split_fraction: float = DEFAULT_SPLIT_FRACTION,
    burn_in: int = 200,
) -> list[TimeSeries]:
    """Simulate ``count`` independent realizations of a SARI model.

    Realization ``i`` uses the ``i``-th stream spawned from ``seed`` and is
    named ``synth-<i+1>``.

    Raises:
        StationarityError: If the differenced-scale AR part is not stationary.

    """
    if count < 1:
        raise DataFormatError(f"Need at least one realization, got {count}")
    streams = np.random.SeedSequence(seed).spawn(count)
    width = len(str(count))
    return [
        TimeSeries(
            f"synth-{i + 1:0{width}d}",
            simulate(spec, params, length, np.random.default_rng(stream), burn_in=burn_in),
            split_fraction=split_fraction,
        )
        for i, stream in enumerate(streams)
    ]
