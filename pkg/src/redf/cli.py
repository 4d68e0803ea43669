"""Command-line entry point.

Subcommands: preprocess, train, gridsearch, benchmark, serve, predict.
Every command is deterministic given its inputs and --seed, writes only
under --out, and reports failures as a single machine-parseable line on
stderr (`error: <Kind>: <message>`).
"""

from __future__ import annotations

import argparse
import sys
import threading
from pathlib import Path

import numpy as np

from . import artifact, baselines, evaluation, figures, serving, training
from .errors import ConfigError, RedfError
from .lstm import HyperParams, init_params, rollout
from .numeric import DEFAULT_SEED, make_rng
from .timeseries import (
    DEFAULT_IQR_K,
    DEFAULT_MAX_GAP,
    DEFAULT_SPLIT_RATIO,
    MINMAX,
    ZSCORE,
    TimeSeries,
    fit_scaler,
    handle_missing,
    handle_outliers,
    load_csv,
    make_windows,
    preprocess,
    save_cache,
    split,
)


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="input CSV (Datetime,<ZONE>_MW)")
    p.add_argument("--zone", required=True, help="zone name matching the CSV header")
    p.add_argument("--scaler", choices=[ZSCORE, MINMAX], default=ZSCORE)
    p.add_argument("--last", type=int, default=None, metavar="N",
                   help="keep only the last N hours after cleaning")
    p.add_argument("--max-gap", type=int, default=DEFAULT_MAX_GAP,
                   help="longest gap (hours) filled by interpolation")
    p.add_argument("--iqr-k", type=float, default=DEFAULT_IQR_K,
                   help="IQR multiplier for outlier clipping")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    defaults = HyperParams()
    p.add_argument("--timesteps", type=int, default=defaults.timesteps)
    p.add_argument("--horizon", type=int, default=defaults.horizon)
    p.add_argument("--units", type=int, default=defaults.units)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--batch", type=int, default=defaults.batch_size)
    p.add_argument("--dropout", type=float, default=defaults.dropout)
    p.add_argument("--lr", type=float, default=defaults.learning_rate)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="redf",
                                     description="Short-term energy demand forecasting")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"rng seed (default {DEFAULT_SEED})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean a zone CSV and cache it with metadata")
    _add_data_args(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a forecaster and write artifact + history")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gridsearch", help="grid-search hyperparameters with expanding-window CV")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--grid-units", default=None, help="comma list, e.g. 50,100,200")
    p.add_argument("--grid-timesteps", default=None)
    p.add_argument("--grid-lr", default=None)
    p.add_argument("--grid-dropout", default=None)
    p.add_argument("--grid-batch", default=None)
    p.add_argument("--folds", type=int, default=3)

    p = sub.add_parser("benchmark", help="train, score against baselines, emit report + figures")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="serve forecasts from artifacts")
    p.add_argument("--artifact", action="append", required=True,
                   help="model artifact path (repeatable)")
    p.add_argument("--listen", default=None, metavar="HOST:PORT",
                   help="answer forecast requests directly on this address")
    p.add_argument("--broker", default=None, metavar="HOST:PORT",
                   help="run a broker on this address and poll it for requests")

    p = sub.add_parser("predict", help="one-shot forecast from an artifact or a server")
    p.add_argument("--artifact", default=None, help="artifact path (for --local)")
    p.add_argument("--model", default=None, help="model name (defaults to artifact stem)")
    p.add_argument("--history", default=None, help="file with one MW value per line")
    p.add_argument("--values", default=None, help="inline comma-separated MW values")
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--local", action="store_true", help="run inference in-process")
    p.add_argument("--listen", default=None, metavar="HOST:PORT",
                   help="model server address for remote prediction")
    p.add_argument("--broker", default=None, metavar="HOST:PORT",
                   help="broker address for queued prediction")
    p.add_argument("--timeout", type=float, default=30.0)
    return parser


def _parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"address must be HOST:PORT, got {text!r}")
    return host, int(port)


def _load_clean(args) -> TimeSeries:
    ts = load_csv(args.data, args.zone)
    clean = handle_outliers(handle_missing(ts, max_gap=args.max_gap), k=args.iqr_k)
    if args.last is not None:
        if args.last < 1:
            raise ConfigError(f"--last must be >= 1, got {args.last}")
        clean = TimeSeries(zone=clean.zone, timestamps=clean.timestamps[-args.last:],
                           values=clean.values[-args.last:], raw_rows=clean.raw_rows)
    return clean


def _hyper_from_args(args) -> HyperParams:
    return HyperParams(units=args.units, epochs=args.epochs, batch_size=args.batch,
                       timesteps=args.timesteps, dropout=args.dropout,
                       learning_rate=args.lr, horizon=args.horizon).validate()


def cmd_preprocess(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ts = load_csv(args.data, args.zone)
    clean, scaler, stats = preprocess(ts, max_gap=args.max_gap, iqr_k=args.iqr_k,
                                      scaler_kind=args.scaler)
    csv_path = out / f"{args.zone}_clean.csv"
    meta_path = out / f"{args.zone}_clean.meta.json"
    save_cache(clean, stats, csv_path, meta_path)
    print(f"zone={stats.zone} raw_rows={stats.raw_rows} points={stats.points} "
          f"gaps_filled={stats.gaps_filled} outliers_clipped={stats.outliers_clipped} "
          f"scaler={scaler.kind}")
    print(f"wrote {csv_path} and {meta_path}")
    return 0


def _train_model(args, clean: TimeSeries):
    """Shared train pipeline: split, scale on train only, window, fit."""
    hyper = _hyper_from_args(args)
    train_ts, test_ts = split(clean, DEFAULT_SPLIT_RATIO)
    scaler = fit_scaler(train_ts, kind=args.scaler)
    scaled = scaler.apply(clean)
    train_scaled = scaled[: len(train_ts)]
    windows = make_windows(train_scaled, hyper.timesteps, hyper.horizon)
    rng = make_rng(args.seed)
    params = init_params(hyper, rng)

    def epoch_line(epoch: int, stats) -> None:
        print(f"epoch {epoch + 1}/{hyper.epochs} train_mse={stats.train_mse:.6g} "
              f"val_mse={stats.val_mse:.6g}")

    trained, history = training.train(params, windows, hyper, rng, callback=epoch_line)
    return trained, history, scaler, scaled, train_ts, test_ts, hyper


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clean = _load_clean(args)
    trained, history, scaler, _scaled, _train_ts, _test_ts, _hyper = _train_model(args, clean)
    artifact_path = out / f"{args.zone}.redf"
    history_path = out / f"{args.zone}_history.csv"
    artifact.serialize(trained, scaler, artifact_path)
    history.to_csv(history_path)
    print(f"stop_reason={history.stop_reason} best_val_mse={history.best_val_mse!r}")
    print(f"wrote {artifact_path} and {history_path}")
    return 0


def _csv_list(text: str | None, convert):
    return None if text is None else [convert(v) for v in text.split(",") if v]


def cmd_gridsearch(args) -> int:
    clean = _load_clean(args)
    base = _hyper_from_args(args)
    train_ts, _ = split(clean, DEFAULT_SPLIT_RATIO)
    scaler = fit_scaler(train_ts, kind=args.scaler)
    grid = training.Grid(
        units=_csv_list(args.grid_units, int),
        timesteps=_csv_list(args.grid_timesteps, int),
        learning_rate=_csv_list(args.grid_lr, float),
        dropout=_csv_list(args.grid_dropout, float),
        batch_size=_csv_list(args.grid_batch, int),
    )
    result = training.grid_search(grid, scaler.apply(train_ts), base,
                                  folds=args.folds, seed=args.seed)
    print("units,timesteps,lr,dropout,batch,feasible,score")
    for row in result.table:
        h = row.hyper
        score = repr(row.score) if row.feasible else "skipped"
        print(f"{h.units},{h.timesteps},{h.learning_rate},{h.dropout},{h.batch_size},"
              f"{row.feasible},{score}")
    b = result.best
    print(f"best: units={b.units} timesteps={b.timesteps} lr={b.learning_rate} "
          f"dropout={b.dropout} batch={b.batch_size} (train_runs={result.train_runs})")
    return 0


def _test_windows(scaled: np.ndarray, n_train: int, hyper: HyperParams):
    """Windows whose targets fall in the test segment; inputs may reach
    back into the train tail so every test point keeps full history."""
    all_w = make_windows(scaled, hyper.timesteps, hyper.horizon)
    first = n_train - hyper.timesteps - hyper.horizon + 1
    inputs = all_w.inputs[first:]
    targets = all_w.targets[first:]
    target_idx = np.arange(n_train, n_train + len(targets))
    return inputs, targets, target_idx


def cmd_benchmark(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clean = _load_clean(args)
    zone = args.zone
    trained, history, scaler, scaled, train_ts, _test_ts, hyper = _train_model(args, clean)

    inputs, targets, target_idx = _test_windows(scaled, len(train_ts), hyper)
    rows: list[evaluation.MetricsRow] = []
    predictions: dict[str, np.ndarray] = {}

    predictions["REDf"] = training.predict_batched(trained, inputs)
    rows += evaluation.evaluate(targets, predictions["REDf"], scaler, "REDf", zone)

    train_windows = make_windows(scaled[: len(train_ts)], hyper.timesteps, hyper.horizon)
    forest = baselines.fit_forest(train_windows, seed=args.seed)
    predictions["RFR"] = baselines.predict_forest(forest, inputs)
    rows += evaluation.evaluate(targets, predictions["RFR"], scaler, "RFR", zone)

    season = 24
    predictions["SeasonalNaive"] = scaled[target_idx - season]
    rows += evaluation.evaluate(targets, predictions["SeasonalNaive"], scaler,
                                "SeasonalNaive", zone)

    rows += evaluation.quoted_rows(zone)
    report_path = out / f"{zone}_report.csv"
    evaluation.write_report(rows, report_path)

    stamps = clean.timestamps[target_idx]
    actual_mw = scaler.invert(targets)
    for model, pred in predictions.items():
        pred_mw = scaler.invert(pred)
        figures.export_predictions(actual_mw, pred_mw, stamps,
                                   out / f"{zone}_{model}_predictions.csv")
        chart = [("actual", actual_mw), ("predicted", pred_mw)]
        title = f"{zone} actual vs predicted ({model})"
        figures.render_line_svg(out / f"{zone}_{model}_forecast.svg", title, chart,
                                x_label="test hour", y_label="demand (MW)")
        figures.render_line_png(out / f"{zone}_{model}_forecast.png", title, chart,
                                x_label="test hour", y_label="demand (MW)")

    loss_series = [("train", np.array([e.train_mse for e in history.epochs])),
                   ("validation", np.array([e.val_mse for e in history.epochs]))]
    figures.render_line_svg(out / f"{zone}_loss.svg", f"{zone} loss curves", loss_series,
                            x_label="epoch", y_label="MSE (scaled)")
    figures.render_line_png(out / f"{zone}_loss.png", f"{zone} loss curves", loss_series,
                            x_label="epoch", y_label="MSE (scaled)")
    history.to_csv(out / f"{zone}_history.csv")

    for r in rows:
        print(f"{r.model},{r.dataset},{r.unit},mae={r.mae:.6g},rmse={r.rmse:.6g},"
              f"r2={r.r2:.6g},{r.provenance}")
    print(f"wrote report and figures under {out}")
    return 0


def cmd_serve(args) -> int:
    if not args.listen and not args.broker:
        raise ConfigError("serve needs --listen and/or --broker")
    host, port = _parse_address(args.listen) if args.listen else ("127.0.0.1", 0)
    server = serving.ModelServer(artifact_paths=args.artifact, host=host, port=port)
    broker = None
    if args.listen:
        server.start()
        print(f"model server listening on {host}:{port} "
              f"(models: {', '.join(sorted(server.models))})")
    if args.broker:
        bhost, bport = _parse_address(args.broker)
        broker = serving.Broker(bhost, bport).start()
        server.attach_broker(broker.address)
        print(f"broker listening on {bhost}:{bport}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        if broker is not None:
            broker.stop()
    print("shutdown complete")
    return 0


def _read_history(args) -> np.ndarray:
    if args.values is not None:
        return np.array([float(v) for v in args.values.split(",") if v], dtype=np.float64)
    if args.history is not None:
        lines = Path(args.history).read_text(encoding="utf-8").split()
        return np.array([float(v) for v in lines], dtype=np.float64)
    raise ConfigError("predict needs --history FILE or --values LIST")


def cmd_predict(args) -> int:
    history = _read_history(args)
    if args.local:
        if not args.artifact:
            raise ConfigError("--local prediction needs --artifact")
        params, scaler = artifact.deserialize(args.artifact)
        forecast = rollout(params, scaler, history, args.horizon)
    elif args.listen or args.broker:
        model = args.model or (Path(args.artifact).stem if args.artifact else None)
        if not model:
            raise ConfigError("remote prediction needs --model (or --artifact for its name)")
        if args.listen:
            resp = serving.client_request(_parse_address(args.listen), model, history,
                                          args.horizon, timeout=args.timeout)
        else:
            resp = serving.client_request_via_broker(_parse_address(args.broker), model,
                                                     history, args.horizon,
                                                     timeout=args.timeout)
        forecast = np.array(resp["forecast"], dtype=np.float64)
    else:
        raise ConfigError("predict needs one of --local, --listen, --broker")
    for value in forecast:
        print(repr(float(value)))
    return 0


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "gridsearch": cmd_gridsearch,
    "benchmark": cmd_benchmark,
    "serve": cmd_serve,
    "predict": cmd_predict,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except RedfError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
