"""Forecast diagnostics: vertical and horizontal variance, MAPE by horizon."""

import logging
import math
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np

from ac_forecast.ensemble.ensemble import ForecastEnsemble, anti_diagonal
from ac_forecast.errors import AcForecastError, DimensionMismatchError, StabilityUndefinedError
from ac_forecast.metrics.scores import ensemble_actuals

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VarianceProfile:
    """Per-position variances with their mean."""

    positions: np.ndarray
    variances: np.ndarray
    mean: float


def vertical_variance(
    ensemble: ForecastEnsemble,
    sample: int = 0,
    boundary: Literal["full", "truncated"] = "full",
) -> VarianceProfile:
    """Unbiased variance of each anti-diagonal, averaged over targets.

    With ``boundary="full"`` only targets covered by all ``m`` origins
    contribute. ``"truncated"`` also includes boundary targets that at least
    two origins cover.

    Raises:
        StabilityUndefinedError: If no target qualifies.

    """
    if boundary not in ("full", "truncated"):
        raise ValueError(f"Unknown boundary policy {boundary!r}")
    coverage = ensemble.horizon if boundary == "full" else 2
    targets = ensemble.targets(min_coverage=max(coverage, 2))
    if not targets:
        raise StabilityUndefinedError(
            f"No target is covered by {max(coverage, 2)} origins "
            f"(n={ensemble.origin_count}, m={ensemble.horizon})",
        )
    variances = np.array([np.var(anti_diagonal(ensemble, t, sample), ddof=1) for t in targets])
    return VarianceProfile(np.array(targets), variances, math.fsum(variances) / len(variances))


def horizontal_variance(ensemble: ForecastEnsemble, sample: int = 0) -> VarianceProfile:
    """Variance of each origin's trajectory across horizons.

    Raises:
        StabilityUndefinedError: If ``m < 2``.

    """
    if ensemble.horizon < 2:
        raise StabilityUndefinedError("Horizontal variance needs a horizon of at least 2")
    variances = np.array([np.var(ensemble.row(o, sample), ddof=1) for o in ensemble.origins])
    return VarianceProfile(
        np.array(list(ensemble.origins)),
        variances,
        math.fsum(variances) / len(variances),
    )


@dataclass(frozen=True)
class MapeByHorizon:
    """Mean absolute percentage error per horizon.

    ``values[j - 1]`` is NaN when every actual at horizon ``j`` is zero;
    ``excluded[j - 1]`` counts the zero-actual cells skipped at that horizon.
    """

    values: np.ndarray
    excluded: np.ndarray

    @property
    def excluded_total(self) -> int:
        return int(np.sum(self.excluded))


def mape_by_horizon(ensemble: ForecastEnsemble, series) -> MapeByHorizon:
    """MAPE for each horizon, averaged over origins and samples."""
    actuals = ensemble_actuals(ensemble, series)
    forecasts = ensemble.values
    values = np.full(ensemble.horizon, np.nan)
    excluded = np.zeros(ensemble.horizon, dtype=int)
    for c in range(ensemble.horizon):
        y = actuals[:, c]
        valid = y != 0.0
        excluded[c] = int(np.count_nonzero(~valid)) * ensemble.sample_count
        if not np.any(valid):
            continue
        errors = np.abs(forecasts[valid, c, :] - y[valid, np.newaxis]) / np.abs(y[valid, np.newaxis])
        values[c] = math.fsum(errors.ravel()) / errors.size
    if excluded.any():
        logger.debug("Excluded %d zero-actual MAPE cells", int(excluded.sum()))
    return MapeByHorizon(values=values, excluded=excluded)


def relative_improvement(baseline: float, candidate: float) -> float:
    """``(baseline - candidate) / baseline``; positive means the candidate is lower.

    Raises:
        AcForecastError: If ``baseline`` is zero.

    """
    if baseline == 0:
        raise AcForecastError("Relative improvement is undefined for a zero baseline")
    return (baseline - candidate) / baseline


def _nullable(value: float) -> float | None:
    return None if value is None or not math.isfinite(value) else float(value)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Stability and error diagnostics of one ensemble."""

    mean_vertical_variance: float
    per_horizon_mape: np.ndarray
    one_step_mape: float
    excluded_mape_cells: np.ndarray
    mean_horizontal_variance: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_vertical_variance": _nullable(self.mean_vertical_variance),
            "per_horizon_mape": [_nullable(v) for v in self.per_horizon_mape],
            "one_step_mape": _nullable(self.one_step_mape),
            "excluded_mape_cells": [int(v) for v in self.excluded_mape_cells],
            "mean_horizontal_variance": _nullable(self.mean_horizontal_variance),
        }


def diagnose(ensemble: ForecastEnsemble, series, sample: int = 0) -> DiagnosticsReport:
    """Build a ``DiagnosticsReport``; undefined variances are NaN."""
    if ensemble.horizon < 1:
        raise DimensionMismatchError("Ensemble has no horizons")
    try:
        vertical = vertical_variance(ensemble, sample).mean
    except StabilityUndefinedError as exc:
        logger.debug("Vertical variance undefined: %s", exc)
        vertical = math.nan
    try:
        horizontal = horizontal_variance(ensemble, sample).mean
    except StabilityUndefinedError:
        horizontal = math.nan
    mape = mape_by_horizon(ensemble, series)
    return DiagnosticsReport(
        mean_vertical_variance=vertical,
        per_horizon_mape=mape.values,
        one_step_mape=float(mape.values[0]),
        excluded_mape_cells=mape.excluded,
        mean_horizontal_variance=horizontal,
    )
