"""Fit SARI coefficients by minimizing the AC score of rolling in-sample forecasts.

Each epoch rolls the model over every valid origin of the training
segment, scores the forecasts with the same energy score and energy
distance as ``ac_forecast.metrics``, differentiates the loss on the tape
and updates the coefficients with AdamW.
"""

import logging
import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from ac_forecast.autodiff.tape import (
    DEFAULT_SQRT_EPS,
    Node,
    Tape,
    mul,
    sum_nodes,
    value_of,
    weighted_distance,
)
from ac_forecast.ensemble.ensemble import ForecastEnsemble
from ac_forecast.ensemble.weights import WeightSchedule, build_weight_schedule
from ac_forecast.errors import (
    DataFormatError,
    NoValidOriginError,
    NonFiniteGradientError,
    SeriesTimeoutError,
    StabilityUndefinedError,
    WeightScheduleError,
)
from ac_forecast.logs import log_train
from ac_forecast.metrics.scores import ScoreConfig, stability_subweights
from ac_forecast.sari.fitting import one_step_residuals
from ac_forecast.sari.model import (
    SariParams,
    SariSpec,
    ar_lag_coefficients,
    difference,
    differencing_polynomial,
    forecast_path,
    stationarity_check,
)
from ac_forecast.training.optim import OptimizerState, PlateauScheduler, adamw_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of AC-score training.

    ``accuracy_weights`` defaults to the linear schedule ``1 - j/h`` at
    ``horizon``; ``stability_weights`` defaults to ``accuracy_weights``.
    """

    horizon: int = 24
    lam: float = 0.5
    accuracy_weights: WeightSchedule | None = None
    stability_weights: WeightSchedule | None = None
    batch_size: int = 32
    lr0: float = 0.05
    scheduler_factor: float = 0.5
    scheduler_patience: int = 10
    max_epochs: int = 200
    seed: int = 42
    init_range: tuple[float, float] = (-1.0, 1.0)
    min_lr: float = 1e-5
    convergence_tol: float = 1e-4
    weight_decay: float = 1e-2
    full_batch: bool = False
    sample_count: int = 1
    noise_scale: float | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise DataFormatError(f"horizon must be >= 1, got {self.horizon}")
        if self.batch_size < 1:
            raise DataFormatError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.scheduler_patience < 1:
            raise DataFormatError(f"scheduler_patience must be >= 1, got {self.scheduler_patience}")
        if self.max_epochs < 0:
            raise DataFormatError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.sample_count < 1:
            raise DataFormatError(f"sample_count must be >= 1, got {self.sample_count}")
        for name in ("lr0", "min_lr"):
            if getattr(self, name) <= 0:
                raise DataFormatError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.scheduler_factor < 1.0:
            raise DataFormatError(f"scheduler_factor must lie in (0, 1), got {self.scheduler_factor}")
        low, high = self.init_range
        if not low < high:
            raise DataFormatError(f"init_range must be increasing, got {self.init_range}")
        object.__setattr__(self, "init_range", (float(low), float(high)))
        if self.accuracy_weights is None:
            object.__setattr__(self, "accuracy_weights", build_weight_schedule("linear", self.horizon))
        if self.accuracy_weights.horizon != self.horizon:
            raise WeightScheduleError(
                f"Accuracy weights cover {self.accuracy_weights.horizon} horizons, "
                f"training horizon is {self.horizon}",
            )
        if self.stability_weights is None:
            object.__setattr__(self, "stability_weights", self.accuracy_weights)
        # Validates lambda and the stability schedule's horizon.
        self.score_config()

    def score_config(self) -> ScoreConfig:
        return ScoreConfig(self.accuracy_weights, self.stability_weights, self.lam)

    def to_dict(self) -> dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["accuracy_weights"] = self.accuracy_weights.to_dict()
        data["stability_weights"] = self.stability_weights.to_dict()
        data["init_range"] = list(self.init_range)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        """Build from a flat mapping, keeping defaults for absent keys.

        Raises:
            DataFormatError: On unknown keys or invalid values.

        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise DataFormatError(f"Unknown training settings: {', '.join(unknown)}")
        values = dict(data)
        for key in ("accuracy_weights", "stability_weights"):
            spec = values.get(key)
            if isinstance(spec, dict):
                spec = {"horizon": values.get("horizon", 24), **spec}
                values[key] = WeightSchedule.from_dict(spec)
        if "init_range" in values:
            values["init_range"] = tuple(values["init_range"])
        try:
            return cls(**values)
        except TypeError as exc:
            raise DataFormatError(f"Invalid training settings: {exc}") from exc


@dataclass
class TrainTrace:
    """Per-epoch record of a training run."""

    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    final_epoch: int = 0
    converged: bool = False
    stationary: bool = True
    best_epoch: int | None = None
    nonfinite_epochs: list[int] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "epoch": np.arange(1, len(self.losses) + 1),
                "loss": self.losses,
                "lr": self.lrs,
            },
        )

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def to_dict(self) -> dict[str, Any]:
        return {
            "losses": list(self.losses),
            "lrs": list(self.lrs),
            "final_epoch": self.final_epoch,
            "converged": self.converged,
            "stationary": self.stationary,
            "best_epoch": self.best_epoch,
            "nonfinite_epochs": list(self.nonfinite_epochs),
        }


@dataclass
class PathEnsemble:
    """Forecast paths that may hold tape nodes.

    ``paths[r][i]`` is sample path ``i`` (a list of ``m`` values) issued at
    ``origins[r]``. Origins are ascending but need not be contiguous.
    """

    origins: list[int]
    paths: list[list[list]]
    horizon: int

    @property
    def origin_count(self) -> int:
        return len(self.origins)

    @property
    def sample_count(self) -> int:
        return len(self.paths[0]) if self.paths else 0

    def to_forecast_ensemble(self) -> ForecastEnsemble:
        """Plain-float ensemble; origins must be contiguous.

        Raises:
            NoValidOriginError: If the origins have gaps or the ensemble is empty.

        """
        if not self.origins or self.origins != list(range(self.origins[0], self.origins[-1] + 1)):
            raise NoValidOriginError("Only a contiguous, non-empty path ensemble converts")
        values = np.array(
            [[[value_of(v) for v in path] for path in block] for block in self.paths],
        )
        return ForecastEnsemble(np.transpose(values, (0, 2, 1)), origin_offset=self.origins[0])


def valid_origins(spec: SariSpec, length: int, horizon: int) -> list[int]:
    """Origins with full model history and a full target window in ``length`` values."""
    first = max(spec.required_history - 1, 0)
    return list(range(first, length - horizon))


def rolling_forecast_ensemble(
    spec: SariSpec,
    phi,
    Phi,
    train,
    m: int,
    origins: list[int] | None = None,
    shocks: dict[int, np.ndarray] | None = None,
) -> PathEnsemble:
    """Recursive ``m``-step forecasts from every valid origin of ``train``.

    Args:
        spec: Model orders.
        phi: Regular AR coefficients, numbers or tape nodes.
        Phi: Seasonal AR coefficients, numbers or tape nodes.
        train: Training values.
        m: Forecast horizon.
        origins: Subset of valid origins to forecast from; all by default.
        shocks: Optional ``(k, m)`` innovation draws per origin for sampled paths.

    Raises:
        NoValidOriginError: If no origin has full history and target window.

    """
    train = np.asarray(train, dtype=float)
    available = valid_origins(spec, len(train), m)
    if not available:
        raise NoValidOriginError(
            f"{spec.label()} with horizon {m} needs at least "
            f"{max(spec.required_history, 1) + m} training values, got {len(train)}",
        )
    if origins is None:
        origins = available
    else:
        origins = sorted(origins)
        if origins and not (available[0] <= origins[0] and origins[-1] <= available[-1]):
            raise NoValidOriginError(f"Requested origins {origins[0]}..{origins[-1]} are not all valid")

    order = spec.differencing_order
    x = difference(train, spec.d, spec.D, spec.s)[0] if order else train
    poly = differencing_polynomial(spec.d, spec.D, spec.s)
    lags, coefs = ar_lag_coefficients(spec, phi, Phi)
    paths = []
    for o in origins:
        end = o - order + 1
        x_tail = x[end - spec.max_lag : end] if spec.max_lag else x[:0]
        anchors = train[o - order + 1 : o + 1] if order else train[:0]
        draws = None if shocks is None else shocks[o]
        count = 1 if draws is None else len(draws)
        paths.append(
            [
                forecast_path(lags, coefs, x_tail, anchors, poly, m, None if draws is None else draws[i])
                for i in range(count)
            ],
        )
    return PathEnsemble(origins=list(origins), paths=paths, horizon=m)


def _energy_score_term(block: list[list], actuals: np.ndarray, weights: np.ndarray, eps: float):
    k = len(block)
    misfit = mul(sum_nodes([weighted_distance(path, actuals, weights, eps) for path in block]), 1.0 / k)
    if k < 2:
        return misfit
    return misfit - mul(_pairwise_term(block, weights, eps), 1.0 / (k * (k - 1)))


def _pairwise_term(block: list[list], weights: np.ndarray, eps: float):
    return sum_nodes(
        [
            weighted_distance(block[i], block[j], weights, eps)
            for i in range(len(block))
            for j in range(i + 1, len(block))
        ],
    )


def _energy_distance_term(block_t: list[list], block_t1: list[list], weights: np.ndarray, eps: float):
    k = len(block_t)
    earlier = [path[1:] for path in block_t]
    later = [path[:-1] for path in block_t1]
    cross = mul(
        sum_nodes([weighted_distance(a, b, weights, eps) for a, b in zip(earlier, later, strict=True)]),
        1.0 / k,
    )
    if k < 2:
        return cross
    scale = 1.0 / (k * (k - 1))
    return cross - mul(_pairwise_term(earlier, weights, eps), scale) - mul(
        _pairwise_term(later, weights, eps),
        scale,
    )


@dataclass
class LossTerms:
    """A differentiable loss and the float terms it was built from."""

    loss: Any
    energy_scores: list[float]
    energy_distances: list[float]


def ac_loss_terms(
    ensemble: PathEnsemble,
    train,
    config: TrainConfig,
    scored: list[int] | None = None,
    eps: float = DEFAULT_SQRT_EPS,
) -> LossTerms:
    """Differentiable AC score over the ``scored`` origins of ``ensemble``.

    Accuracy averages the energy score over ``scored``; stability averages
    the energy distance over pairs ``(t, t + 1)`` with ``t`` scored and
    ``t + 1`` present in the ensemble. A batch without pairs contributes
    accuracy only.
    """
    train = np.asarray(train, dtype=float)
    m = ensemble.horizon
    index = {o: r for r, o in enumerate(ensemble.origins)}
    scored = ensemble.origins if scored is None else sorted(scored)
    accuracy_w = config.accuracy_weights.weights
    energy_scores = []
    for o in scored:
        energy_scores.append(
            _energy_score_term(ensemble.paths[index[o]], train[o + 1 : o + m + 1], accuracy_w, eps),
        )
    loss = mul(sum_nodes(energy_scores), 1.0 / len(energy_scores))

    energy_distances = []
    if config.lam != 0:
        sub_w = stability_subweights(config.stability_weights)
        for o in scored:
            if o + 1 in index:
                energy_distances.append(
                    _energy_distance_term(ensemble.paths[index[o]], ensemble.paths[index[o + 1]], sub_w, eps),
                )
        if energy_distances:
            loss = loss + mul(sum_nodes(energy_distances), config.lam / len(energy_distances))
    return LossTerms(
        loss=loss,
        energy_scores=[value_of(v) for v in energy_scores],
        energy_distances=[value_of(v) for v in energy_distances],
    )


def ac_loss(ensemble: PathEnsemble, train, config: TrainConfig, eps: float = DEFAULT_SQRT_EPS):
    """Differentiable AC score of a full rolling ensemble.

    Raises:
        StabilityUndefinedError: If ``lam > 0`` and there are fewer than two
            origins or ``m < 2``.

    """
    if config.lam != 0 and (ensemble.origin_count < 2 or ensemble.horizon < 2):
        raise StabilityUndefinedError(
            f"Stability needs two origins and m >= 2 (n={ensemble.origin_count}, m={ensemble.horizon})",
        )
    return ac_loss_terms(ensemble, train, config, eps=eps).loss


def _draw_shocks(config: TrainConfig, scale: float, epoch: int, origins: list[int]) -> dict[int, np.ndarray] | None:
    if config.sample_count == 1:
        return None
    return {
        o: np.random.default_rng([config.seed, epoch, o]).normal(0.0, scale, size=(config.sample_count, config.horizon))
        for o in origins
    }


def loss_and_gradient(
    spec: SariSpec,
    vector: np.ndarray,
    train,
    config: TrainConfig,
    origins: list[int] | None = None,
    shocks: dict[int, np.ndarray] | None = None,
) -> tuple[LossTerms, np.ndarray]:
    """AC loss over ``origins`` (all valid origins by default) and its gradient."""
    tape = Tape()
    phi = [tape.parameter(v, f"phi_{i + 1}") for i, v in enumerate(vector[: spec.p])]
    Phi = [tape.parameter(v, f"Phi_{k + 1}") for k, v in enumerate(vector[spec.p :])]
    train = np.asarray(train, dtype=float)
    if origins is None:
        origins = valid_origins(spec, len(train), config.horizon)
    needed = sorted(set(origins) | ({o + 1 for o in origins} if config.lam != 0 else set()))
    last = len(train) - config.horizon - 1
    needed = [o for o in needed if o <= last]
    ensemble = rolling_forecast_ensemble(spec, phi, Phi, train, config.horizon, needed, shocks)
    terms = ac_loss_terms(ensemble, train, config, scored=origins)
    if isinstance(terms.loss, Node):
        grads = tape.backward(terms.loss)
        gradient = np.array([grads[p.name] for p in tape.parameters])
    else:
        gradient = np.zeros(len(vector))
    return terms, gradient


def epoch_objective(terms: LossTerms, lam: float) -> float:
    """Mean energy score plus ``lam`` times the mean energy distance, summed exactly."""
    loss = math.fsum(terms.energy_scores) / len(terms.energy_scores)
    if terms.energy_distances:
        loss += lam * math.fsum(terms.energy_distances) / len(terms.energy_distances)
    return loss


def train(
    spec: SariSpec,
    train,
    config: TrainConfig | None = None,
    deadline: float | None = None,
) -> tuple[SariParams, TrainTrace]:
    """Minimize the AC score of rolling in-sample forecasts.

    Coefficients start uniform in ``config.init_range``. Every epoch shuffles
    the origins with a generator seeded by ``(seed, epoch)``, applies one
    AdamW update per batch (one per epoch in full-batch mode), then scores
    the updated coefficients on every origin and feeds that loss to the
    plateau scheduler. Training stops after ``max_epochs``, or once the rate
    sits at ``min_lr`` and the epoch did not improve. A non-finite loss or
    gradient ends training early. The coefficients with the lowest recorded
    epoch loss are returned with ``sigma`` set to the in-sample one-step
    residual scale.

    Args:
        spec: Model orders.
        train: Training values.
        config: Hyperparameters.
        deadline: ``time.monotonic`` value after which training is abandoned.

    Returns:
        The fitted parameters and the per-epoch trace.

    Raises:
        NoValidOriginError: If the series is too short for one origin.
        StabilityUndefinedError: If ``lam > 0`` with one origin or ``m = 1``.
        SeriesTimeoutError: If ``deadline`` passes.

    """
    config = config or TrainConfig()
    train = np.asarray(train, dtype=float)
    origins = valid_origins(spec, len(train), config.horizon)
    if not origins:
        raise NoValidOriginError(
            f"{spec.label()} with horizon {config.horizon} needs at least "
            f"{max(spec.required_history, 1) + config.horizon} training values, got {len(train)}",
        )
    if config.lam != 0 and (len(origins) < 2 or config.horizon < 2):
        raise StabilityUndefinedError(
            f"Stability needs two origins and m >= 2 (n={len(origins)}, m={config.horizon})",
        )

    rng = np.random.default_rng(config.seed)
    low, high = config.init_range
    vector = rng.uniform(low, high, size=spec.parameter_count)
    noise_scale = config.noise_scale
    if config.sample_count > 1 and noise_scale is None:
        x = difference(train, spec.d, spec.D, spec.s)[0] if spec.differencing_order else train
        noise_scale = float(np.std(x))

    state = OptimizerState.initial(len(vector), lr=config.lr0, weight_decay=config.weight_decay)
    scheduler = PlateauScheduler(
        config.lr0,
        factor=config.scheduler_factor,
        patience=config.scheduler_patience,
        threshold=config.convergence_tol,
        min_lr=config.min_lr,
    )
    trace = TrainTrace()
    best_vector, best_loss = vector.copy(), math.inf
    batch_size = len(origins) if config.full_batch else config.batch_size

    for epoch in range(config.max_epochs):
        if deadline is not None and time.monotonic() > deadline:
            raise SeriesTimeoutError(f"Training {spec.label()} ran past its deadline at epoch {epoch}")
        order = np.random.default_rng([config.seed, epoch]).permutation(origins)
        shocks = _draw_shocks(config, noise_scale, epoch, origins)
        aborted = False
        for b in range(0, len(order), batch_size):
            batch = sorted(int(o) for o in order[b : b + batch_size])
            _, gradient = loss_and_gradient(spec, vector, train, config, batch, shocks)
            try:
                vector, state = adamw_step(state, vector, gradient)
            except NonFiniteGradientError:
                aborted = True
                break

        # The epoch is scored on every origin at the coefficients it ends with.
        epoch_loss = math.nan
        if not aborted:
            terms, _ = loss_and_gradient(spec, vector, train, config, origins, shocks)
            epoch_loss = epoch_objective(terms, config.lam)
        if aborted or not math.isfinite(epoch_loss):
            trace.nonfinite_epochs.append(epoch + 1)
            log_train(f"{spec.label()}: non-finite loss or gradient at epoch {epoch + 1}, stopping")
            break

        trace.losses.append(epoch_loss)
        trace.lrs.append(state.lr)
        trace.final_epoch = epoch + 1
        improved = scheduler.is_improvement(epoch_loss)
        if epoch_loss < best_loss:
            best_loss, best_vector = epoch_loss, vector.copy()
            trace.best_epoch = epoch + 1
        lr = scheduler.step(epoch_loss)
        state = replace(state, lr=lr)
        log_train(f"{spec.label()} epoch {epoch + 1}: loss={epoch_loss:.6g} lr={lr:.3g}")
        if lr <= config.min_lr and not improved:
            trace.converged = True
            break

    residuals = one_step_residuals(spec, SariParams.from_vector(spec, best_vector), train)
    sigma = float(np.std(residuals)) if residuals.size else 0.0
    params = SariParams.from_vector(spec, best_vector, sigma=sigma)
    trace.stationary = stationarity_check(spec, params).stationary
    logger.debug(
        "Trained %s for %d epochs, best loss %.6g, stationary=%s",
        spec.label(),
        trace.final_epoch,
        best_loss,
        trace.stationary,
    )
    return params, trace
