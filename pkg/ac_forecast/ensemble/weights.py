"""Horizon weight schedules.

A schedule assigns a nonnegative weight to each horizon ``j = 1..m`` and is
normalized to sum to one. Accuracy and stability may use different
schedules; see ``ScoreConfig``.
"""

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ac_forecast.errors import WeightScheduleError

WEIGHT_KINDS = (
    "uniform",
    "linear",
    "exponential",
    "hyperbolic",
    "inverse_variance",
    "piecewise",
)

SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class WeightSchedule:
    """Normalized per-horizon weights ``w_1..w_m``."""

    kind: str
    horizon: int
    weights: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.shape != (self.horizon,):
            raise WeightScheduleError(
                f"Expected {self.horizon} weights, got shape {weights.shape}",
            )
        if weights.size == 0 or not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise WeightScheduleError(f"Weights must be finite, nonnegative and non-empty: {weights}")
        total = math.fsum(weights)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise WeightScheduleError(f"Weights must sum to 1, got {total!r}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.horizon

    def to_dict(self) -> dict[str, Any]:
        """Serialize to a JSON-compatible mapping."""
        return {
            "kind": self.kind,
            "horizon": self.horizon,
            "params": _jsonable(self.params),
            "weights": [float(w) for w in self.weights],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WeightSchedule":
        """Rebuild a schedule from ``to_dict`` output or a ``{kind, horizon, params}`` spec."""
        try:
            kind = data["kind"]
            horizon = int(data["horizon"])
        except (KeyError, TypeError, ValueError) as exc:
            raise WeightScheduleError(f"Invalid weight schedule spec: {data!r}") from exc
        return build_weight_schedule(kind, horizon, **data.get("params", {}))


def normalize_weights(raw) -> np.ndarray:
    """Divide nonnegative raw weights by their sum.

    Raises:
        WeightScheduleError: On negative entries or an all-zero vector.

    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1 or raw.size == 0:
        raise WeightScheduleError("Weights must be a non-empty vector")
    if not np.all(np.isfinite(raw)) or np.any(raw < 0):
        raise WeightScheduleError(f"Weights must be finite and nonnegative: {raw}")
    total = raw.sum()
    if total <= 0:
        raise WeightScheduleError("All raw weights are zero; cannot normalize")
    return raw / total


def build_weight_schedule(kind: str, horizon: int, **params) -> WeightSchedule:
    """Evaluate a named weight form at ``j = 1..horizon`` and normalize.

    Args:
        kind: One of ``WEIGHT_KINDS``.
        horizon: Number of horizons ``m``.
        **params: Shape parameters. ``linear`` takes ``floor`` (default 0)
            for the ``1 - j/h`` form, or ``intercept`` and ``slope`` for
            ``a + b*j``; ``exponential`` takes ``alpha``; ``hyperbolic`` takes
            ``beta``; ``inverse_variance`` takes ``variances``; ``piecewise``
            takes ``breaks`` and ``levels``.

    Returns:
        The normalized schedule.

    Raises:
        WeightScheduleError: On an unknown kind, bad horizon or bad parameter.

    """
    if isinstance(horizon, bool) or not isinstance(horizon, (int, np.integer)):
        raise WeightScheduleError(f"Horizon must be an integer, got {horizon!r}")
    if horizon < 1:
        raise WeightScheduleError(f"Horizon must be positive, got {horizon}")
    builder = _BUILDERS.get(kind)
    if builder is None:
        raise WeightScheduleError(
            f"Unknown weight kind {kind!r}; expected one of {', '.join(WEIGHT_KINDS)}",
        )
    j = np.arange(1, horizon + 1, dtype=float)
    try:
        raw = builder(j, horizon, **params)
    except TypeError as exc:
        raise WeightScheduleError(f"Bad parameters for {kind}: {exc}") from exc
    return WeightSchedule(
        kind=kind,
        horizon=int(horizon),
        weights=normalize_weights(raw),
        params=dict(params),
    )


def _positive(name: str, value) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise WeightScheduleError(f"{name} must be positive, got {value}")
    return value


def _uniform(j, horizon):
    return np.ones_like(j)


def _linear(j, horizon, floor=0.0, intercept=None, slope=None):
    if intercept is not None or slope is not None:
        if intercept is None or slope is None:
            raise WeightScheduleError("Linear weights need both intercept and slope")
        raw = float(intercept) + float(slope) * j
        if np.any(raw < 0):
            raise WeightScheduleError(
                f"Linear weights {intercept} + {slope}*j turn negative within horizon {horizon}",
            )
        return raw
    floor = float(floor)
    if floor < 0:
        raise WeightScheduleError(f"floor must be nonnegative, got {floor}")
    return np.maximum(1.0 - j / horizon, floor)


def _exponential(j, horizon, alpha):
    alpha = _positive("alpha", alpha)
    return np.exp(-alpha * j)


def _hyperbolic(j, horizon, beta):
    beta = _positive("beta", beta)
    return 1.0 / (1.0 + beta * j)


def _inverse_variance(j, horizon, variances):
    variances = np.asarray(variances, dtype=float)
    if variances.shape != (horizon,):
        raise WeightScheduleError(
            f"Need {horizon} variances, got shape {variances.shape}",
        )
    if not np.all(np.isfinite(variances)) or np.any(variances <= 0):
        raise WeightScheduleError("Variances must all be positive")
    return 1.0 / variances


def _piecewise(j, horizon, breaks, levels):
    breaks = [int(b) for b in breaks]
    levels = np.asarray(levels, dtype=float)
    if len(levels) != len(breaks) + 1:
        raise WeightScheduleError(
            f"Piecewise weights need len(breaks) + 1 levels, got {len(breaks)} breaks "
            f"and {len(levels)} levels",
        )
    if breaks != sorted(set(breaks)) or any(b < 2 or b > horizon for b in breaks):
        raise WeightScheduleError(
            f"Breaks must be strictly increasing horizons in 2..{horizon}: {breaks}",
        )
    if np.any(levels < 0):
        raise WeightScheduleError("Piecewise levels must be nonnegative")
    segment = np.searchsorted(np.asarray(breaks, dtype=float), j, side="right")
    return levels[segment]


_BUILDERS = {
    "uniform": _uniform,
    "linear": _linear,
    "exponential": _exponential,
    "hyperbolic": _hyperbolic,
    "inverse_variance": _inverse_variance,
    "piecewise": _piecewise,
}


def _jsonable(params: dict[str, Any]) -> dict[str, Any]:
    out = {}
    for key, value in params.items():
        if isinstance(value, np.ndarray):
            value = value.tolist()
        elif isinstance(value, (list, tuple)):
            value = [v.item() if isinstance(v, np.generic) else v for v in value]
        elif isinstance(value, np.generic):
            value = value.item()
        out[key] = value
    return out
