"""Command-line entry point for ac_forecast.

Subcommands score ensembles, fit and evaluate SARI models, simulate
series, print weight schedules and run full comparison experiments.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ac_forecast import __version__
from ac_forecast.ensemble.ensemble import TimeSeries, split
from ac_forecast.ensemble.io import read_ensemble_csv, read_series_csv, write_series_csv
from ac_forecast.ensemble.weights import WEIGHT_KINDS, WeightSchedule, build_weight_schedule
from ac_forecast.errors import AcForecastError, DataFormatError
from ac_forecast.harness.data import synth_dgp
from ac_forecast.harness.experiment import ExperimentConfig, evaluate_model, run_experiment
from ac_forecast.logs import log_error, setup_logging
from ac_forecast.metrics.scores import ScoreConfig, ac_score
from ac_forecast.sari.fitting import OrderGrid, css_fit, select_orders
from ac_forecast.sari.model import SariSpec, model_from_dict, model_to_dict
from ac_forecast.storage.storage import ResultStore, dumps, load_json
from ac_forecast.training.trainer import TrainConfig, train

logger = logging.getLogger(__name__)


def _parse_param(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"Expected key=value, got {text!r}")
    if "," in raw:
        return key, [float(v) for v in raw.split(",") if v]
    return key, float(raw)


def _parse_spec(text: str) -> SariSpec:
    try:
        p, d, P, D, s = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"Expected p,d,P,D,s, got {text!r}") from exc
    return SariSpec(p=p, d=d, P=P, D=D, s=s)


def _pick_series(path: str, series_id: str | None, split_fraction: float | None = None) -> TimeSeries:
    series = read_series_csv(path, split_fraction=split_fraction)
    if series_id is None:
        return series[0]
    for s in series:
        if s.id == series_id:
            return s
    raise DataFormatError(f"Series {series_id!r} not found in {path}")


def _schedule(args, horizon: int) -> WeightSchedule:
    return build_weight_schedule(args.weights, horizon, **dict(args.param or []))


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def _score_config(args, horizon: int) -> ScoreConfig:
    if args.config is not None:
        config = ScoreConfig.from_dict(load_json(args.config))
    else:
        config = ScoreConfig(_schedule(args, horizon), lam=args.lam)
    return config


def cmd_score(args) -> int:
    ensemble = read_ensemble_csv(args.ensemble)
    series = _pick_series(args.series, args.series_id)
    report = ac_score(ensemble, series, _score_config(args, ensemble.horizon))
    _emit(dumps(report.to_dict()) + "\n", args.output)
    return 0


def cmd_fit(args) -> int:
    series = _pick_series(args.series, args.series_id, args.split_fraction)
    values = series.values if args.full else split(series)[0].values
    spec = args.spec or select_orders(values, OrderGrid())
    store = ResultStore(args.output_dir)
    if args.method == "css":
        fit = css_fit(spec, values)
        store.save_json("params.json", model_to_dict(spec, fit.params))
    else:
        config = TrainConfig.from_dict(load_json(args.config)) if args.config else TrainConfig()
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        params, trace = train(spec, values, config)
        store.save_json("params.json", model_to_dict(spec, params))
        trace.to_csv(store.path("trace.csv"))
    logger.info("Wrote %s fit of %s to %s", args.method, spec.label(), store.output_dir)
    return 0


def cmd_evaluate(args) -> int:
    spec, params = model_from_dict(load_json(args.params))
    series = _pick_series(args.series, args.series_id, args.split_fraction)
    result = evaluate_model(spec, params, series, _score_config(args, args.horizon))
    _emit(dumps(result.to_dict()) + "\n", args.output)
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if overrides:
        config = replace(config, **overrides)
    outcome = run_experiment(config, workers=args.workers)
    sys.stdout.write(f"{outcome.report.improved_share:.4f} of series improved the AC score\n")
    return 0


def cmd_synth(args) -> int:
    spec, params = model_from_dict(load_json(args.model))
    series = synth_dgp(spec, params, args.length, args.seed, args.count)
    write_series_csv(series, args.output)
    return 0


def cmd_weights(args) -> int:
    schedule = _schedule(args, args.horizon)
    lines = [f"{j},{float(w)!r}" for j, w in enumerate(schedule.weights, start=1)]
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _add_weight_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--weights", choices=WEIGHT_KINDS, default="linear", help="Weight schedule kind")
    parser.add_argument(
        "--param",
        action="append",
        type=_parse_param,
        metavar="KEY=VALUE",
        help="Weight shape parameter; repeatable",
    )
    parser.add_argument("--lam", type=float, default=0.5, help="Stability multiplier lambda")
    parser.add_argument("--config", default=None, help="Score configuration JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ac-forecast", description="Accuracy and stability of rolling forecasts")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        default=None,
        help="Logging level (default: AC_FORECAST_LOG_LEVEL or WARNING)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    score = sub.add_parser("score", help="Score an ensemble CSV against a series")
    score.add_argument("--ensemble", required=True, help="Long-format ensemble CSV")
    score.add_argument("--series", required=True, help="Series CSV holding the actuals")
    score.add_argument("--series-id", default=None, help="Series to use (default: first row)")
    score.add_argument("-o", "--output", default=None, help="Write JSON here instead of stdout")
    _add_weight_options(score)
    score.set_defaults(handler=cmd_score)

    fit = sub.add_parser("fit", help="Fit a model to a series' training segment")
    fit.add_argument("--series", required=True, help="Series CSV")
    fit.add_argument("--series-id", default=None)
    fit.add_argument("--spec", type=_parse_spec, default=None, help="Orders p,d,P,D,s (default: AIC selection)")
    fit.add_argument("--method", choices=["ac", "css"], default="ac")
    fit.add_argument("--config", default=None, help="Training configuration JSON")
    fit.add_argument("--split-fraction", type=float, default=None)
    fit.add_argument("--full", action="store_true", help="Fit on the whole series")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--output-dir", default=None)
    fit.set_defaults(handler=cmd_fit)

    evaluate = sub.add_parser("evaluate", help="Score a fitted model on a series' test segment")
    evaluate.add_argument("--params", required=True, help="Model JSON from 'fit'")
    evaluate.add_argument("--series", required=True)
    evaluate.add_argument("--series-id", default=None)
    evaluate.add_argument("--horizon", type=int, default=24)
    evaluate.add_argument("--split-fraction", type=float, default=None)
    evaluate.add_argument("-o", "--output", default=None)
    _add_weight_options(evaluate)
    evaluate.set_defaults(handler=cmd_evaluate)

    experiment = sub.add_parser("experiment", help="Run the baseline versus AC comparison")
    experiment.add_argument("--config", required=True, help="Experiment configuration JSON")
    experiment.add_argument("--output-dir", default=None)
    experiment.add_argument("--seed", type=int, default=None)
    experiment.add_argument("--workers", type=int, default=None, help="Default: AC_FORECAST_WORKERS or 1")
    experiment.set_defaults(handler=cmd_experiment)

    synth = sub.add_parser("synth", help="Simulate series from a model JSON")
    synth.add_argument("--model", required=True)
    synth.add_argument("--length", type=int, default=400)
    synth.add_argument("--count", type=int, default=1)
    synth.add_argument("--seed", type=int, default=42)
    synth.add_argument("-o", "--output", required=True)
    synth.set_defaults(handler=cmd_synth)

    weights = sub.add_parser("weights", help="Print a normalized weight schedule")
    weights.add_argument("--kind", dest="weights", choices=WEIGHT_KINDS, required=True)
    weights.add_argument("--horizon", type=int, required=True)
    weights.add_argument("--param", action="append", type=_parse_param, metavar="KEY=VALUE")
    weights.set_defaults(handler=cmd_weights)
    return parser


def cli_main(argv: list[str] | None = None) -> int:
    """Parse ``argv`` and dispatch.

    Returns:
        0 on success, 2 on usage errors, 1 on any other failure.

    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except (AcForecastError, OSError) as exc:
        log_error(f"{args.command}: {exc}")
        sys.stderr.write(f"error: {exc}\n")
        return 1


def run():
    """Run ac-forecast with command line argument parsing."""
    sys.exit(cli_main())


if __name__ == "__main__":
    run()
