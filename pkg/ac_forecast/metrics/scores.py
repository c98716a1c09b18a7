"""The AC score family: energy score accuracy plus energy distance stability.

All per-origin and per-pair terms are reduced with ``math.fsum`` so results
do not depend on summation order.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import norm

from ac_forecast.ensemble.ensemble import ForecastEnsemble, TimeSeries
from ac_forecast.ensemble.weights import WeightSchedule, normalize_weights
from ac_forecast.errors import (
    AcForecastError,
    DimensionMismatchError,
    EnsembleIndexError,
    StabilityUndefinedError,
    WeightScheduleError,
)

logger = logging.getLogger(__name__)


def weight_vector(weights) -> np.ndarray:
    """Plain weight array from a schedule or array-like."""
    if isinstance(weights, WeightSchedule):
        return weights.weights
    return np.asarray(weights, dtype=float)


def stability_subweights(weights) -> np.ndarray:
    """Weights for horizons ``2..m`` of the earlier origin, renormalized.

    A schedule with no mass on ``2..m`` (linear weights at ``m = 2``, or all
    weight on horizon 1) falls back to uniform weights over ``2..m``.

    Raises:
        StabilityUndefinedError: If ``m < 2``.
        WeightScheduleError: On negative or non-finite weights.

    """
    w = weight_vector(weights)
    if len(w) < 2:
        raise StabilityUndefinedError("Stability needs a horizon of at least 2")
    tail = w[1:]
    if np.all(np.isfinite(tail)) and np.all(tail == 0):
        logger.debug("Weights vanish on horizons 2..%d, using uniform stability weights", len(w))
        return np.full(len(tail), 1.0 / len(tail))
    return normalize_weights(tail)


def _pairwise_sum(scaled: np.ndarray) -> float:
    """Sum of Euclidean distances over unordered pairs of rows."""
    k = scaled.shape[0]
    if k < 2:
        return 0.0
    if scaled.shape[1] == 1:
        ordered = np.sort(scaled[:, 0])
        ranks = 2.0 * np.arange(k) - (k - 1)
        return float(ordered @ ranks)
    return math.fsum(pdist(scaled))


def _within_term(scaled: np.ndarray) -> float:
    k = scaled.shape[0]
    if k < 2:
        return 0.0
    return _pairwise_sum(scaled) / (k * (k - 1))


def energy_score_empirical(forecast_samples, actuals, weights) -> float:
    """Weighted energy score of ``k`` sample paths against one outcome path.

    ``(1/k) sum_i ||x_i - y||_w - 1/(k(k-1)) sum_{i<j} ||x_i - x_j||_w``,
    where ``||d||_w = sqrt(sum_j w_j d_j^2)``. With ``k = 1`` the second
    term is zero.

    Raises:
        DimensionMismatchError: On inconsistent shapes or ``k = 0``.

    """
    samples = np.asarray(forecast_samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[np.newaxis, :]
    actuals = np.asarray(actuals, dtype=float).reshape(-1)
    w = weight_vector(weights)
    if samples.shape[0] == 0:
        raise DimensionMismatchError("Energy score needs at least one sample")
    if samples.shape[1] != len(actuals) or len(w) != len(actuals):
        raise DimensionMismatchError(
            f"Samples {samples.shape}, actuals {actuals.shape} and weights {w.shape} disagree",
        )
    root_w = np.sqrt(w)
    scaled = samples * root_w
    misfit = np.sqrt(np.sum((scaled - actuals * root_w) ** 2, axis=1))
    return math.fsum(misfit) / samples.shape[0] - _within_term(scaled)


def energy_distance_empirical(samples_t, samples_t1, stability_weights) -> float:
    """Weighted energy distance between two marginalized sample blocks.

    Sample ``i`` of the earlier origin is paired with sample ``i`` of the
    later one in the cross term, so samples across origins should be drawn
    independently. The estimate can be negative for small ``k``.

    Raises:
        DimensionMismatchError: On inconsistent shapes or no overlapping horizons.

    """
    a = np.asarray(samples_t, dtype=float)
    b = np.asarray(samples_t1, dtype=float)
    if a.ndim == 1:
        a = a[np.newaxis, :]
    if b.ndim == 1:
        b = b[np.newaxis, :]
    w = weight_vector(stability_weights)
    if a.shape != b.shape or a.shape[0] == 0:
        raise DimensionMismatchError(f"Sample blocks {a.shape} and {b.shape} disagree")
    if a.shape[1] == 0:
        raise DimensionMismatchError("No overlapping horizons between successive origins")
    if len(w) != a.shape[1]:
        raise DimensionMismatchError(f"Expected {a.shape[1]} stability weights, got {len(w)}")
    root_w = np.sqrt(w)
    sa, sb = a * root_w, b * root_w
    cross = math.fsum(np.sqrt(np.sum((sa - sb) ** 2, axis=1))) / a.shape[0]
    return cross - _within_term(sa) - _within_term(sb)


def crps_empirical(samples, y: float) -> float:
    """CRPS of a sample forecast: the one-dimensional energy score."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 1)
    if samples.shape[0] == 0:
        raise DimensionMismatchError("CRPS needs at least one sample")
    return energy_score_empirical(samples, [y], [1.0])


def gaussian_crps(mu: float, sigma: float, y: float) -> float:
    """Closed-form CRPS of ``N(mu, sigma^2)`` at ``y``."""
    z = (y - mu) / sigma
    return float(sigma * (z * (2.0 * norm.cdf(z) - 1.0) + 2.0 * norm.pdf(z) - 1.0 / math.sqrt(math.pi)))


def _series_values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=float)


def ensemble_actuals(ensemble: ForecastEnsemble, series) -> np.ndarray:
    """Realized values aligned with the ensemble, shape ``(n, m)``.

    Raises:
        EnsembleIndexError: If a target lies beyond the series.

    """
    values = _series_values(series)
    if ensemble.last_target >= len(values):
        raise EnsembleIndexError(
            f"Ensemble targets reach index {ensemble.last_target} "
            f"but the series has {len(values)} values",
        )
    starts = np.arange(ensemble.origin_count) + ensemble.origin_offset + 1
    return values[starts[:, np.newaxis] + np.arange(ensemble.horizon)]


def accuracy_score(ensemble: ForecastEnsemble, series, weights) -> tuple[float, np.ndarray]:
    """Mean energy score over origins, with the per-origin scores."""
    actuals = ensemble_actuals(ensemble, series)
    per_origin = np.array(
        [
            energy_score_empirical(ensemble.values[r].T, actuals[r], weights)
            for r in range(ensemble.origin_count)
        ],
    )
    return math.fsum(per_origin) / len(per_origin), per_origin


def stability_score(ensemble: ForecastEnsemble, stability_weights) -> tuple[float, np.ndarray]:
    """Mean energy distance over successive origin pairs, with the per-pair values.

    Raises:
        StabilityUndefinedError: With fewer than two origins or ``m < 2``.

    """
    if ensemble.origin_count < 2:
        raise StabilityUndefinedError("Stability needs at least two forecast origins")
    sub = stability_subweights(stability_weights)
    values = ensemble.values
    per_pair = np.array(
        [
            energy_distance_empirical(values[r, 1:, :].T, values[r + 1, :-1, :].T, sub)
            for r in range(ensemble.origin_count - 1)
        ],
    )
    return math.fsum(per_pair) / len(per_pair), per_pair


@dataclass(frozen=True)
class ScoreConfig:
    """Accuracy weights ``w``, stability weights ``w'`` and multiplier lambda."""

    accuracy_weights: WeightSchedule
    stability_weights: WeightSchedule | None = None
    lam: float = 0.5

    def __post_init__(self):
        if not math.isfinite(self.lam) or self.lam < 0:
            raise WeightScheduleError(f"lambda must be nonnegative, got {self.lam}")
        if self.stability_weights is None:
            object.__setattr__(self, "stability_weights", self.accuracy_weights)
        if self.stability_weights.horizon != self.accuracy_weights.horizon:
            raise WeightScheduleError(
                "Accuracy and stability schedules must share a horizon",
            )

    @property
    def horizon(self) -> int:
        return self.accuracy_weights.horizon

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracy_weights": self.accuracy_weights.to_dict(),
            "stability_weights": self.stability_weights.to_dict(),
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScoreConfig":
        accuracy = WeightSchedule.from_dict(data["accuracy_weights"])
        stability = data.get("stability_weights")
        return cls(
            accuracy_weights=accuracy,
            stability_weights=None if stability is None else WeightSchedule.from_dict(stability),
            lam=float(data.get("lambda", 0.5)),
        )


@dataclass(frozen=True)
class ScoreReport:
    """Accuracy, stability and AC score of one ensemble."""

    accuracy: float
    stability: float
    ac_score: float
    per_origin_energy_scores: np.ndarray
    per_pair_energy_distances: np.ndarray
    lam: float = 0.5

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "stability": self.stability,
            "ac_score": self.ac_score,
            "lambda": self.lam,
            "per_origin_energy_scores": [float(v) for v in self.per_origin_energy_scores],
            "per_pair_energy_distances": [float(v) for v in self.per_pair_energy_distances],
        }


def ac_score(ensemble: ForecastEnsemble, series, config: ScoreConfig) -> ScoreReport:
    """Accuracy plus lambda times stability.

    With ``lambda = 0`` an undefined stability (one origin or ``m = 1``) is
    reported as 0 instead of raising.
    """
    if ensemble.horizon != config.horizon:
        raise DimensionMismatchError(
            f"Ensemble horizon {ensemble.horizon} differs from weight horizon {config.horizon}",
        )
    accuracy, per_origin = accuracy_score(ensemble, series, config.accuracy_weights)
    try:
        stability, per_pair = stability_score(ensemble, config.stability_weights)
    except StabilityUndefinedError:
        if config.lam != 0:
            raise
        stability, per_pair = 0.0, np.zeros(0)
    return ScoreReport(
        accuracy=accuracy,
        stability=stability,
        ac_score=accuracy + config.lam * stability,
        per_origin_energy_scores=per_origin,
        per_pair_energy_distances=per_pair,
        lam=config.lam,
    )


@dataclass(frozen=True)
class ExpectedScore:
    """Monte Carlo estimate of the AC score over a data-generating process."""

    mean: float
    stderr: float
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))


def expected_ac_score(
    dgp: Callable[[np.random.Generator], TimeSeries],
    forecaster: Callable[[TimeSeries], ForecastEnsemble],
    config: ScoreConfig,
    r: int,
    seed: int,
) -> ExpectedScore:
    """Average the AC score over ``r`` independent realizations.

    Args:
        dgp: Draws one realization from the generator it is given.
        forecaster: Produces an ensemble for a realization.
        config: Score configuration.
        r: Number of replications, at least 2.
        seed: Root seed; replication ``i`` uses the ``i``-th spawned stream.

    Raises:
        AcForecastError: If ``r < 2`` or a replication fails.

    """
    if r < 2:
        raise AcForecastError(f"Need at least 2 replications, got {r}")
    streams = np.random.SeedSequence(seed).spawn(r)
    scores = np.empty(r)
    for i, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        try:
            realization = dgp(rng)
        except Exception as exc:
            raise AcForecastError(f"Data-generating process failed on replication {i}") from exc
        try:
            ensemble = forecaster(realization)
        except Exception as exc:
            raise AcForecastError(f"Forecaster failed on replication {i}") from exc
        scores[i] = ac_score(ensemble, realization, config).ac_score
    mean = math.fsum(scores) / r
    stderr = float(np.std(scores, ddof=1) / math.sqrt(r))
    return ExpectedScore(mean=mean, stderr=stderr, scores=scores)
