"""Series and forecast ensemble containers.

Index conventions used across the package:

* series positions are 0-based, ``values[0] .. values[T-1]``;
* an origin is the position of the last observed value, so origin ``o``
  issues forecasts for targets ``o + 1 .. o + m``;
* ensemble row ``r`` holds origin ``origin_offset + r`` and column ``c``
  holds horizon ``j = c + 1``.
"""

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ac_forecast.errors import (
    DataFormatError,
    DimensionMismatchError,
    EnsembleIndexError,
    SeriesTooShortError,
)

DEFAULT_SPLIT_FRACTION = 0.6


@dataclass(frozen=True)
class TimeSeries:
    """A univariate realization with train/test split metadata."""

    id: str
    values: np.ndarray
    split_fraction: float = DEFAULT_SPLIT_FRACTION

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise DimensionMismatchError(
                f"Series {self.id!r} must be one-dimensional, got shape {values.shape}",
            )
        if not np.all(np.isfinite(values)):
            raise DataFormatError(f"Series {self.id!r} contains missing values")
        if not 0.0 < self.split_fraction < 1.0:
            raise DataFormatError(
                f"split_fraction must lie in (0, 1), got {self.split_fraction}",
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def boundary(self) -> int:
        """Index of the first test observation."""
        return math.floor(self.split_fraction * len(self.values))


@dataclass(frozen=True)
class SplitView:
    """One side of a series' train/test split."""

    series: TimeSeries
    role: Literal["train", "test"]

    @property
    def start(self) -> int:
        return 0 if self.role == "train" else self.series.boundary

    @property
    def stop(self) -> int:
        return self.series.boundary if self.role == "train" else len(self.series)

    @property
    def values(self) -> np.ndarray:
        return self.series.values[self.start : self.stop]

    def __len__(self) -> int:
        return self.stop - self.start


def split(series: TimeSeries) -> tuple[SplitView, SplitView]:
    """Split a series at ``floor(split_fraction * T)``.

    Raises:
        SeriesTooShortError: If either side would be empty.

    """
    boundary = series.boundary
    if boundary < 1 or boundary >= len(series):
        raise SeriesTooShortError(
            f"Series {series.id!r} of length {len(series)} cannot be split "
            f"at fraction {series.split_fraction}",
        )
    return SplitView(series, "train"), SplitView(series, "test")


@dataclass(frozen=True)
class ForecastEnsemble:
    """Sampled multi-step forecast paths, one block per origin.

    ``values[r, c, i]`` is sample ``i`` of the forecast issued at origin
    ``origin_offset + r`` for horizon ``c + 1``.
    """

    values: np.ndarray
    origin_offset: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, np.newaxis]
        if values.ndim != 3 or min(values.shape) < 1:
            raise DimensionMismatchError(
                f"Ensemble must have shape (n, m, k) with all sizes >= 1, got {values.shape}",
            )
        if not np.all(np.isfinite(values)):
            raise DataFormatError("Ensemble contains non-finite cells")
        if self.origin_offset < 0:
            raise EnsembleIndexError(f"Negative origin offset {self.origin_offset}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def origin_count(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def sample_count(self) -> int:
        return self.values.shape[2]

    @property
    def origins(self) -> range:
        return range(self.origin_offset, self.origin_offset + self.origin_count)

    @property
    def last_target(self) -> int:
        return self.origin_offset + self.origin_count - 1 + self.horizon

    def covering_origins(self, target: int) -> list[int]:
        """Origins, ascending, whose forecast window contains ``target``."""
        first = max(target - self.horizon, self.origin_offset)
        last = min(target - 1, self.origin_offset + self.origin_count - 1)
        return list(range(first, last + 1))

    def targets(self, min_coverage: int = 1) -> list[int]:
        """Targets covered by at least ``min_coverage`` origins."""
        return [
            t
            for t in range(self.origin_offset + 1, self.last_target + 1)
            if len(self.covering_origins(t)) >= min_coverage
        ]

    def row(self, origin: int, sample: int = 0) -> np.ndarray:
        """The m-step trajectory issued at ``origin``."""
        r = origin - self.origin_offset
        if not 0 <= r < self.origin_count:
            raise EnsembleIndexError(f"Origin {origin} is outside the ensemble")
        self._check_sample(sample)
        return self.values[r, :, sample].copy()

    def _check_sample(self, sample: int) -> None:
        if not 0 <= sample < self.sample_count:
            raise EnsembleIndexError(
                f"Sample {sample} is outside 0..{self.sample_count - 1}",
            )


def anti_diagonal(
    ensemble: ForecastEnsemble,
    target: int,
    sample: int = 0,
) -> np.ndarray:
    """Forecasts of ``target`` issued at successive origins.

    Returns values ordered by origin ascending. Near the ensemble
    boundaries fewer than ``m`` origins cover a target and the result is
    truncated rather than padded.

    Raises:
        EnsembleIndexError: If no origin covers ``target``.

    """
    ensemble._check_sample(sample)
    origins = ensemble.covering_origins(target)
    if not origins:
        raise EnsembleIndexError(
            f"Target {target} is not covered by origins "
            f"{ensemble.origin_offset}..{ensemble.origin_offset + ensemble.origin_count - 1}",
        )
    rows = [o - ensemble.origin_offset for o in origins]
    cols = [target - o - 1 for o in origins]
    return ensemble.values[rows, cols, sample].copy()
