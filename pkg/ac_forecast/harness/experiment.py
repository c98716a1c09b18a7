"""Per-series comparison of CSS-fitted and AC-trained SARI models.

For each series the training segment is used to pick orders, fit the
least-squares baseline and train the AC model. Both models then issue
rolling forecasts over the test segment with frozen parameters,
conditioning on the realized values at each origin, and are scored and
diagnosed. Results are aggregated into percentile tables across series.
"""

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import repeat
from typing import Any

import numpy as np
import pandas as pd

from ac_forecast.ensemble.ensemble import DEFAULT_SPLIT_FRACTION, ForecastEnsemble, TimeSeries, split
from ac_forecast.ensemble.weights import build_weight_schedule
from ac_forecast.errors import AcForecastError, DataFormatError, NoValidOriginError
from ac_forecast.harness.data import load_m4_hourly, synth_dgp
from ac_forecast.logs import log_app, log_error
from ac_forecast.metrics.diagnostics import DiagnosticsReport, diagnose, relative_improvement
from ac_forecast.metrics.scores import ScoreConfig, ScoreReport, ac_score
from ac_forecast.sari.fitting import CssSettings, OrderGrid, css_fit, select_orders
from ac_forecast.sari.model import (
    SariParams,
    SariSpec,
    model_from_dict,
    model_to_dict,
    stationarity_check,
)
from ac_forecast.storage.storage import ResultStore, load_settings
from ac_forecast.training.trainer import TrainConfig, rolling_forecast_ensemble, train, valid_origins

logger = logging.getLogger(__name__)

PERCENTILES = np.arange(1, 100)
QUARTILES = (25, 50, 75)
LOG_EPS = 1e-12
IMPROVEMENT_METRICS = ("ac_score", "accuracy", "stability", "one_step_mape", "vertical_variance")
SCORE_METRICS = ("ac_score", "accuracy", "stability")
MODELS = ("baseline", "ac")

SENSITIVITY_WEIGHTS: dict[str, dict[str, float]] = {
    "uniform": {},
    "linear": {},
    "exponential": {"alpha": 5 / 24},
    "hyperbolic": {"beta": 1.0},
}

DEFAULT_EXPERIMENT_SETTINGS: dict[str, Any] = {
    "data": None,
    "synthetic": None,
    "series_ids": None,
    "limit": None,
    "split_fraction": DEFAULT_SPLIT_FRACTION,
    "spec": None,
    "order_grid": None,
    "train": {},
    "score": None,
    "test_horizon": 24,
    "css": {},
    "weight_kinds": [],
    "timeout": 120.0,
    "seed": 42,
    "output_dir": None,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything ``run_experiment`` needs, loaded from a flat JSON file."""

    data: str | None = None
    synthetic: dict[str, Any] | None = None
    series_ids: tuple[str, ...] | None = None
    limit: int | None = None
    split_fraction: float = DEFAULT_SPLIT_FRACTION
    spec: SariSpec | None = None
    order_grid: OrderGrid = field(default_factory=OrderGrid)
    train: TrainConfig = field(default_factory=TrainConfig)
    score: ScoreConfig | None = None
    test_horizon: int = 24
    css: CssSettings = field(default_factory=CssSettings)
    weight_kinds: tuple[str, ...] = ()
    timeout: float = 120.0
    seed: int = 42
    output_dir: str | None = None

    def __post_init__(self):
        if self.score is None:
            schedule = build_weight_schedule("linear", self.test_horizon)
            object.__setattr__(self, "score", ScoreConfig(schedule, lam=self.train.lam))
        object.__setattr__(self, "test_horizon", self.score.horizon)
        unknown = [k for k in self.weight_kinds if k not in SENSITIVITY_WEIGHTS]
        if unknown:
            raise DataFormatError(
                f"Unknown weight kinds {unknown}; expected a subset of {', '.join(SENSITIVITY_WEIGHTS)}",
            )
        if self.timeout <= 0:
            raise DataFormatError(f"timeout must be positive, got {self.timeout}")
        if self.limit is not None and self.limit < 1:
            raise DataFormatError(f"limit must be >= 1, got {self.limit}")

    @property
    def train_config(self) -> TrainConfig:
        """Training settings with the experiment seed applied."""
        return replace(self.train, seed=self.seed)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        """Merge ``data`` over ``DEFAULT_EXPERIMENT_SETTINGS`` and parse nested sections.

        Raises:
            DataFormatError: On unknown keys or invalid sections.

        """
        unknown = sorted(set(data) - set(DEFAULT_EXPERIMENT_SETTINGS))
        if unknown:
            raise DataFormatError(f"Unknown experiment settings: {', '.join(unknown)}")
        merged = {**DEFAULT_EXPERIMENT_SETTINGS, **data}
        try:
            spec = merged["spec"]
            grid = merged["order_grid"]
            score = merged["score"]
            return cls(
                data=merged["data"],
                synthetic=merged["synthetic"],
                series_ids=None if merged["series_ids"] is None else tuple(merged["series_ids"]),
                limit=merged["limit"],
                split_fraction=float(merged["split_fraction"]),
                spec=None if spec is None else SariSpec(**{k: int(v) for k, v in spec.items()}),
                order_grid=OrderGrid() if grid is None else OrderGrid(**{k: tuple(v) for k, v in grid.items()}),
                train=TrainConfig.from_dict(merged["train"]),
                score=None if score is None else ScoreConfig.from_dict(score),
                test_horizon=int(merged["test_horizon"]),
                css=CssSettings(**merged["css"]),
                weight_kinds=tuple(merged["weight_kinds"]),
                timeout=float(merged["timeout"]),
                seed=int(merged["seed"]),
                output_dir=merged["output_dir"],
            )
        except (TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, AcForecastError):
                raise
            raise DataFormatError(f"Invalid experiment settings: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """Read a JSON settings file merged over the defaults."""
        return cls.from_dict(load_settings(path, DEFAULT_EXPERIMENT_SETTINGS))

    def to_dict(self) -> dict[str, Any]:
        return {
            "data": self.data,
            "synthetic": self.synthetic,
            "series_ids": None if self.series_ids is None else list(self.series_ids),
            "limit": self.limit,
            "split_fraction": self.split_fraction,
            "spec": None if self.spec is None else asdict(self.spec),
            "order_grid": {k: list(v) for k, v in asdict(self.order_grid).items()},
            "train": self.train.to_dict(),
            "score": self.score.to_dict(),
            "test_horizon": self.test_horizon,
            "css": asdict(self.css),
            "weight_kinds": list(self.weight_kinds),
            "timeout": self.timeout,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }


@dataclass(frozen=True)
class ModelResult:
    """Out-of-sample evaluation of one fitted model."""

    spec: SariSpec
    params: SariParams
    score: ScoreReport
    diagnostics: DiagnosticsReport
    stationary: bool
    epochs: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": model_to_dict(self.spec, self.params),
            "score": self.score.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
            "stationary": self.stationary,
            "epochs": self.epochs,
        }


@dataclass(frozen=True)
class SeriesResult:
    """Both models' results for one series, or the error that stopped it."""

    series_id: str
    baseline: ModelResult | None = None
    ac: ModelResult | None = None
    improvements: dict[str, float | None] = field(default_factory=dict)
    mape_improvement_by_horizon: tuple[float | None, ...] = ()
    error: str | None = None
    error_type: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict[str, Any]:
        return {
            "series_id": self.series_id,
            "ok": self.ok,
            "baseline": None if self.baseline is None else self.baseline.to_dict(),
            "ac": None if self.ac is None else self.ac.to_dict(),
            "improvements": dict(self.improvements),
            "mape_improvement_by_horizon": list(self.mape_improvement_by_horizon),
            "error": self.error,
            "error_type": self.error_type,
        }


def safe_improvement(baseline: float, candidate: float) -> float | None:
    """``relative_improvement``, or ``None`` when undefined."""
    if not (math.isfinite(baseline) and math.isfinite(candidate)):
        return None
    try:
        return relative_improvement(baseline, candidate)
    except AcForecastError:
        return None


def rolling_test_ensemble(spec: SariSpec, params: SariParams, series: TimeSeries, m: int) -> ForecastEnsemble:
    """Point forecasts from every test origin with frozen parameters.

    Origins run from the last training position to ``T - 1 - m`` and are
    skipped while the model lacks history.

    Raises:
        NoValidOriginError: If the test segment cannot hold a full window.

    """
    origins = [o for o in valid_origins(spec, len(series), m) if o >= series.boundary - 1]
    if not origins:
        raise NoValidOriginError(
            f"Series {series.id!r} has no test origin with horizon {m} for {spec.label()}",
        )
    paths = rolling_forecast_ensemble(spec, list(params.phi), list(params.Phi), series.values, m, origins)
    return paths.to_forecast_ensemble()


def evaluate_model(
    spec: SariSpec,
    params: SariParams,
    series: TimeSeries,
    score_config: ScoreConfig,
    epochs: int | None = None,
) -> ModelResult:
    """Score a fitted model's rolling test forecasts."""
    ensemble = rolling_test_ensemble(spec, params, series, score_config.horizon)
    return ModelResult(
        spec=spec,
        params=params,
        score=ac_score(ensemble, series, score_config),
        diagnostics=diagnose(ensemble, series),
        stationary=stationarity_check(spec, params).stationary,
        epochs=epochs,
    )


def _choose_spec(train_values: np.ndarray, config: ExperimentConfig, deadline: float) -> SariSpec:
    if config.spec is not None:
        return config.spec
    return select_orders(train_values, config.order_grid, config.css, deadline=deadline)


def run_series(series: TimeSeries, config: ExperimentConfig) -> SeriesResult:
    """Fit, train and evaluate both models on one series.

    Failures are captured in the returned result.
    """
    deadline = time.monotonic() + config.timeout
    try:
        train_view, _ = split(series)
        train_values = train_view.values
        spec = _choose_spec(train_values, config, deadline)
        css = css_fit(spec, train_values, config.css, deadline=deadline)
        ac_params, trace = train(spec, train_values, config.train_config, deadline=deadline)
        baseline = evaluate_model(spec, css.params, series, config.score)
        ac = evaluate_model(spec, ac_params, series, config.score, epochs=trace.final_epoch)
    except AcForecastError as exc:
        log_error(f"Series {series.id}: {type(exc).__name__}: {exc}")
        return SeriesResult(series_id=series.id, error=str(exc), error_type=type(exc).__name__)

    improvements = {
        "ac_score": safe_improvement(baseline.score.ac_score, ac.score.ac_score),
        "accuracy": safe_improvement(baseline.score.accuracy, ac.score.accuracy),
        "stability": safe_improvement(baseline.score.stability, ac.score.stability),
        "one_step_mape": safe_improvement(
            baseline.diagnostics.one_step_mape,
            ac.diagnostics.one_step_mape,
        ),
        "vertical_variance": safe_improvement(
            baseline.diagnostics.mean_vertical_variance,
            ac.diagnostics.mean_vertical_variance,
        ),
    }
    by_horizon = tuple(
        safe_improvement(float(b), float(a))
        for b, a in zip(baseline.diagnostics.per_horizon_mape, ac.diagnostics.per_horizon_mape, strict=True)
    )
    log_app(
        f"Series {series.id}: {spec.label()} AC score {baseline.score.ac_score:.6g} -> "
        f"{ac.score.ac_score:.6g}",
    )
    return SeriesResult(
        series_id=series.id,
        baseline=baseline,
        ac=ac,
        improvements=improvements,
        mape_improvement_by_horizon=by_horizon,
    )


@dataclass(frozen=True)
class PercentileCurve:
    """Percentiles of the finite values of one quantity across series."""

    values: np.ndarray
    excluded: int

    @classmethod
    def from_values(cls, values) -> "PercentileCurve":
        raw = np.array([np.nan if v is None else v for v in values], dtype=float)
        finite = raw[np.isfinite(raw)]
        curve = np.percentile(finite, PERCENTILES, method="linear") if finite.size else np.full(len(PERCENTILES), np.nan)
        return cls(values=curve, excluded=int(raw.size - finite.size))

    def at(self, q: int) -> float:
        return float(self.values[q - 1])

    def quartiles(self) -> dict[str, float]:
        return {f"p{q}": self.at(q) for q in QUARTILES}


@dataclass(frozen=True)
class AggregateReport:
    """Cross-series statistics of a batch of ``SeriesResult``."""

    series_count: int
    failed: tuple[str, ...]
    improvements: dict[str, PercentileCurve]
    log_scores: dict[str, dict[str, PercentileCurve]]
    mape_bands: np.ndarray
    one_step_mape: dict[str, PercentileCurve]
    mean_vertical_variance: dict[str, float]
    vertical_variance_ratio: float
    improved_share: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "series_count": self.series_count,
            "failed": list(self.failed),
            "improvements": {
                name: {**curve.quartiles(), "excluded": curve.excluded}
                for name, curve in self.improvements.items()
            },
            "one_step_mape": {
                name: {**curve.quartiles(), "excluded": curve.excluded}
                for name, curve in self.one_step_mape.items()
            },
            "mape_improvement_bands": [
                {"horizon": j + 1, **{f"p{q}": band[i] for i, q in enumerate(QUARTILES)}}
                for j, band in enumerate(self.mape_bands)
            ],
            "mean_vertical_variance": dict(self.mean_vertical_variance),
            "vertical_variance_ratio": self.vertical_variance_ratio,
            "improved_share": self.improved_share,
        }

    def percentile_frame(self, metric: str) -> pd.DataFrame:
        """Tidy ``(percentile, value, model, metric)`` table for one metric."""
        frames = []
        if metric in self.improvements:
            frames.append(_curve_frame(self.improvements[metric], "improvement", metric))
        for model, curves in self.log_scores.items():
            if metric in curves:
                frames.append(_curve_frame(curves[metric], model, f"log_{metric}"))
        return pd.concat(frames, ignore_index=True)

    def mape_frame(self) -> pd.DataFrame:
        """Per-horizon quartile bands of the MAPE improvement."""
        frame = pd.DataFrame(self.mape_bands, columns=[f"p{q}" for q in QUARTILES])
        frame.insert(0, "horizon", np.arange(1, len(self.mape_bands) + 1))
        return frame


def _curve_frame(curve: PercentileCurve, model: str, metric: str) -> pd.DataFrame:
    return pd.DataFrame(
        {"percentile": PERCENTILES, "value": curve.values, "model": model, "metric": metric},
    )


def _log_values(values) -> list[float | None]:
    return [math.log(v + LOG_EPS) if v is not None and v + LOG_EPS > 0 else None for v in values]


def aggregate(results: list[SeriesResult]) -> AggregateReport:
    """Percentile tables over the successful results.

    Raises:
        AcForecastError: If no result succeeded.

    """
    ok = [r for r in results if r.ok]
    failed = tuple(sorted(r.series_id for r in results if not r.ok))
    if not ok:
        raise AcForecastError(f"All {len(results)} series failed; nothing to aggregate")

    improvements = {
        name: PercentileCurve.from_values([r.improvements.get(name) for r in ok])
        for name in IMPROVEMENT_METRICS
    }
    log_scores = {
        model: {
            metric: PercentileCurve.from_values(
                _log_values([getattr(getattr(r, model).score, metric) for r in ok]),
            )
            for metric in SCORE_METRICS
        }
        for model in MODELS
    }
    one_step = {
        "baseline": PercentileCurve.from_values([r.baseline.diagnostics.one_step_mape for r in ok]),
        "ac": PercentileCurve.from_values([r.ac.diagnostics.one_step_mape for r in ok]),
        "improvement": improvements["one_step_mape"],
    }

    horizons = max(len(r.mape_improvement_by_horizon) for r in ok)
    bands = np.full((horizons, len(QUARTILES)), np.nan)
    for j in range(horizons):
        column = [
            r.mape_improvement_by_horizon[j]
            for r in ok
            if j < len(r.mape_improvement_by_horizon) and r.mape_improvement_by_horizon[j] is not None
        ]
        if column:
            bands[j] = np.percentile(column, QUARTILES, method="linear")

    mean_vv = {}
    for model in MODELS:
        values = [getattr(r, model).diagnostics.mean_vertical_variance for r in ok]
        finite = [v for v in values if math.isfinite(v)]
        mean_vv[model] = math.fsum(finite) / len(finite) if finite else math.nan
    ratio = mean_vv["ac"] / mean_vv["baseline"] if mean_vv["baseline"] else math.nan

    improved = [r for r in ok if r.ac.score.ac_score < r.baseline.score.ac_score]
    return AggregateReport(
        series_count=len(results),
        failed=failed,
        improvements=improvements,
        log_scores=log_scores,
        mape_bands=bands,
        one_step_mape=one_step,
        mean_vertical_variance=mean_vv,
        vertical_variance_ratio=ratio,
        improved_share=len(improved) / len(ok),
    )


def format_improvement_table(report: AggregateReport) -> str:
    """Quartiles of the relative improvements as a fixed-width text table."""
    rows = [("Metric", *(f"{q}%" for q in QUARTILES))]
    labels = {"ac_score": "AC score", "accuracy": "Accuracy", "stability": "Stability"}
    for name, label in labels.items():
        curve = report.improvements[name]
        rows.append((label, *(_percent(curve.at(q)) for q in QUARTILES)))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    lines.append(f"Improved AC score: {_percent(report.improved_share)} of {report.series_count - len(report.failed)} series")
    return "\n".join(lines) + "\n"


def _percent(value: float) -> str:
    return "n/a" if not math.isfinite(value) else f"{100.0 * value:.2f}%"


@dataclass(frozen=True)
class WeightSensitivity:
    """Log mean vertical variance per weight kind, across series."""

    log_variances: dict[str, list[float | None]]
    curves: dict[str, PercentileCurve]

    def to_frame(self) -> pd.DataFrame:
        return pd.concat(
            [
                pd.DataFrame(
                    {
                        "kind": kind,
                        "percentile": PERCENTILES,
                        "log_mean_vertical_variance": curve.values,
                    },
                )
                for kind, curve in self.curves.items()
            ],
            ignore_index=True,
        )

    def medians(self) -> dict[str, float]:
        return {kind: curve.at(50) for kind, curve in self.curves.items()}


def _sensitivity_one(series: TimeSeries, config: ExperimentConfig, kinds: tuple[str, ...]) -> dict[str, float | None]:
    deadline = time.monotonic() + config.timeout * len(kinds)
    out: dict[str, float | None] = dict.fromkeys(kinds)
    try:
        train_view, _ = split(series)
        spec = _choose_spec(train_view.values, config, deadline)
    except AcForecastError as exc:
        log_error(f"Series {series.id}: weight sensitivity skipped: {exc}")
        return out
    base = config.train_config
    for kind in kinds:
        schedule = build_weight_schedule(kind, base.horizon, **SENSITIVITY_WEIGHTS[kind])
        train_config = replace(base, accuracy_weights=schedule, stability_weights=schedule)
        try:
            params, _ = train(spec, train_view.values, train_config, deadline=deadline)
            ensemble = rolling_test_ensemble(spec, params, series, config.test_horizon)
            variance = diagnose(ensemble, series).mean_vertical_variance
        except AcForecastError as exc:
            log_error(f"Series {series.id}: weight kind {kind} failed: {exc}")
            continue
        out[kind] = _log_values([variance])[0] if math.isfinite(variance) else None
    return out


def weight_sensitivity(
    series_list: list[TimeSeries],
    config: ExperimentConfig,
    kinds: tuple[str, ...] | None = None,
) -> WeightSensitivity:
    """Train one AC model per weight kind per series and compare vertical variance.

    Raises:
        AcForecastError: If no weight kind is configured.

    """
    kinds = tuple(config.weight_kinds if kinds is None else kinds)
    if not kinds:
        raise AcForecastError("Weight sensitivity needs at least one weight kind")
    if len(kinds) == 1:
        logger.warning("Weight sensitivity with a single kind %s gives one curve", kinds[0])
    unknown = [k for k in kinds if k not in SENSITIVITY_WEIGHTS]
    if unknown:
        raise DataFormatError(f"Unknown weight kinds {unknown}")
    per_series = [_sensitivity_one(s, config, kinds) for s in sorted(series_list, key=lambda s: s.id)]
    log_variances = {kind: [row[kind] for row in per_series] for kind in kinds}
    curves = {kind: PercentileCurve.from_values(values) for kind, values in log_variances.items()}
    return WeightSensitivity(log_variances=log_variances, curves=curves)


def load_experiment_series(config: ExperimentConfig) -> list[TimeSeries]:
    """Series selected by ``config``, sorted by id.

    Raises:
        DataFormatError: If no source is configured or nothing is selected.

    """
    if config.data is not None:
        series = load_m4_hourly(config.data, split_fraction=config.split_fraction)
    elif config.synthetic is not None:
        synthetic = dict(config.synthetic)
        spec, params = model_from_dict(synthetic["model"])
        series = synth_dgp(
            spec,
            params,
            length=int(synthetic.get("length", 400)),
            seed=int(synthetic.get("seed", config.seed)),
            count=int(synthetic.get("count", 20)),
            split_fraction=config.split_fraction,
        )
    else:
        raise DataFormatError("Experiment needs either 'data' or 'synthetic'")
    if config.series_ids is not None:
        wanted = set(config.series_ids)
        series = [s for s in series if s.id in wanted]
    series = sorted(series, key=lambda s: s.id)
    if config.limit is not None:
        series = series[: config.limit]
    if not series:
        raise DataFormatError("No series selected for the experiment")
    return series


def worker_count() -> int:
    """Worker processes from ``AC_FORECAST_WORKERS`` (default 1)."""
    raw = os.environ.get("AC_FORECAST_WORKERS", "1")
    try:
        return max(int(raw), 1)
    except ValueError:
        logger.warning("Ignoring invalid AC_FORECAST_WORKERS=%r", raw)
        return 1


def run_all(series: list[TimeSeries], config: ExperimentConfig, workers: int | None = None) -> list[SeriesResult]:
    """``run_series`` over every series, sorted by id."""
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(series) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_series, series, repeat(config)))
    else:
        results = [run_series(s, config) for s in series]
    return sorted(results, key=lambda r: r.series_id)


@dataclass(frozen=True)
class ExperimentOutcome:
    results: list[SeriesResult]
    report: AggregateReport
    sensitivity: WeightSensitivity | None = None


def run_experiment(
    config: ExperimentConfig,
    store: ResultStore | None = None,
    workers: int | None = None,
) -> ExperimentOutcome:
    """Run every selected series, aggregate, and write the artifacts.

    Writes ``results.jsonl``, ``aggregate.json``, ``percentiles_<metric>.csv``,
    ``mape_by_horizon.csv``, ``summary.txt`` and, when weight kinds are
    configured, ``weight_sensitivity.csv``.

    Raises:
        AcForecastError: If every series failed (``results.jsonl`` is still written).

    """
    store = store or ResultStore(config.output_dir)
    series = load_experiment_series(config)
    log_app(f"Running experiment on {len(series)} series into {store.output_dir}")
    results = run_all(series, config, workers)
    store.save_jsonl("results.jsonl", [r.to_dict() for r in results])
    report = aggregate(results)
    store.save_json("aggregate.json", report.to_dict())
    for metric in IMPROVEMENT_METRICS:
        store.save_frame(f"percentiles_{metric}.csv", report.percentile_frame(metric))
    store.save_frame("mape_by_horizon.csv", report.mape_frame())
    store.save_text("summary.txt", format_improvement_table(report))

    sensitivity = None
    if config.weight_kinds:
        sensitivity = weight_sensitivity(series, config)
        store.save_frame("weight_sensitivity.csv", sensitivity.to_frame())
    log_app(
        f"Experiment finished: {len(results) - len(report.failed)} of {len(results)} series succeeded, "
        f"{100.0 * report.improved_share:.1f}% improved",
    )
    return ExperimentOutcome(results=results, report=report, sensitivity=sensitivity)
