"""CSV formats for ensembles and series.

Ensembles use a long layout with header ``origin,horizon,sample,value``.
The origin column is the 1-based position of the origin in its parent
series; horizons and samples are 1-based as well.

Series use the M4 layout: first column is the series id, the remaining
columns hold values, and trailing empty cells are ignored.
"""

import csv
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from ac_forecast.ensemble.ensemble import ForecastEnsemble, TimeSeries
from ac_forecast.errors import DataFormatError

logger = logging.getLogger(__name__)

ENSEMBLE_COLUMNS = ["origin", "horizon", "sample", "value"]


def write_ensemble_csv(ensemble: ForecastEnsemble, path: str | Path) -> None:
    """Write every cell of ``ensemble`` as one CSV row."""
    n, m, k = ensemble.values.shape
    r, c, i = np.meshgrid(np.arange(n), np.arange(m), np.arange(k), indexing="ij")
    frame = pd.DataFrame(
        {
            "origin": (r + ensemble.origin_offset + 1).ravel(),
            "horizon": (c + 1).ravel(),
            "sample": (i + 1).ravel(),
            "value": ensemble.values.ravel(),
        },
    )
    frame.to_csv(path, index=False, float_format="%.17g")


def read_ensemble_csv(path: str | Path) -> ForecastEnsemble:
    """Read a long-format ensemble CSV.

    Raises:
        DataFormatError: On missing columns, gaps in the index grid or
            duplicated cells.

    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"Cannot parse ensemble CSV {path}: {exc}") from exc
    missing = [c for c in ENSEMBLE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataFormatError(f"Ensemble CSV {path} lacks columns {missing}")
    if frame.empty:
        raise DataFormatError(f"Ensemble CSV {path} has no rows")
    try:
        index = frame[["origin", "horizon", "sample"]].astype(np.int64)
    except (ValueError, TypeError) as exc:
        raise DataFormatError(f"Non-integer index column in {path}") from exc
    if (index < 1).to_numpy().any():
        raise DataFormatError(f"Ensemble CSV {path} has index values below 1")

    origin_offset = int(index["origin"].min()) - 1
    rows = index["origin"].to_numpy() - origin_offset - 1
    cols = index["horizon"].to_numpy() - 1
    samples = index["sample"].to_numpy() - 1
    n, m, k = rows.max() + 1, cols.max() + 1, samples.max() + 1
    if len(frame) != n * m * k:
        raise DataFormatError(
            f"Ensemble CSV {path} has {len(frame)} rows, expected {n}x{m}x{k}={n * m * k}",
        )
    values = np.full((n, m, k), np.nan)
    values[rows, cols, samples] = frame["value"].to_numpy(dtype=float)
    if np.isnan(values).any():
        raise DataFormatError(f"Ensemble CSV {path} has duplicate or missing cells")
    return ForecastEnsemble(values, origin_offset=origin_offset)


def _row_width(path: str | Path) -> int:
    """Number of cells in the longest row."""
    with open(path, newline="", encoding="utf-8") as handle:
        return max((len(row) for row in csv.reader(handle)), default=0)


def read_series_csv(
    path: str | Path,
    split_fraction: float | None = None,
) -> list[TimeSeries]:
    """Read M4-style rows into series.

    A header row whose first cell is ``V1`` (as in the M4 files) is skipped.
    Each row's values are read up to the first empty cell.

    Raises:
        DataFormatError: On unparsable files, non-numeric cells or empty rows.

    """
    try:
        width = _row_width(path)
        frame = pd.read_csv(
            path,
            header=None,
            names=list(range(max(width, 1))),
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
        ).fillna("")
    except (csv.Error, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"Cannot parse series CSV {path}: {exc}") from exc
    if frame.empty:
        raise DataFormatError(f"Series CSV {path} has no rows")
    if frame.iloc[0, 0].strip().strip('"') == "V1":
        frame = frame.iloc[1:]

    extra = {} if split_fraction is None else {"split_fraction": split_fraction}
    series = []
    for _, row in frame.iterrows():
        cells = [cell.strip() for cell in row.tolist()]
        series_id = cells[0]
        values = []
        for cell in cells[1:]:
            if cell == "":
                break
            try:
                values.append(float(cell))
            except ValueError as exc:
                raise DataFormatError(
                    f"Non-numeric value {cell!r} in series {series_id!r}",
                ) from exc
        if not values:
            raise DataFormatError(f"Series {series_id!r} in {path} is empty")
        series.append(TimeSeries(series_id, np.asarray(values), **extra))
    logger.debug("Read %d series from %s", len(series), path)
    return series


def write_series_csv(series: list[TimeSeries], path: str | Path) -> None:
    """Write series in the M4 layout, padding shorter rows with empty cells."""
    if not series:
        raise DataFormatError("No series to write")
    width = max(len(s) for s in series)
    header = ",".join(f"V{i}" for i in range(1, width + 2))
    lines = [header]
    for s in series:
        cells = [s.id, *(repr(float(v)) for v in s.values)]
        cells.extend([""] * (width + 1 - len(cells)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
