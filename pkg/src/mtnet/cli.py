"""Command-line entry points.

Commands: train, evaluate, predict, export-attention, grid-search, baseline,
synth. Every value can come from a `key = value` config file (via --config);
command-line flags override file values. Exit codes: 0 success, 2 usage or
configuration error, 1 runtime failure. All outputs are written atomically.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, evaluation, synth, training
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (RawSeries, SplitSpec, add_calendar_features, chronological_split,
                   fit_scaler, load_matrix, make_samples)
from .errors import ConfigError, MtnetError
from .fileio import write_text_atomic
from .model import MTNet, MTNetConfig


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse {text!r} as a boolean")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).split(",") if x.strip() != "")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(text).split(",") if x.strip() != "")


def read_config_file(path) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


class Settings:
    """Flag-over-file-over-default resolution for one command invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file: dict[str, str] = {}
        if getattr(args, "config", None):
            self.file = read_config_file(args.config)

    def get(self, key: str, cast, default=None, required: bool = False):
        flag_value = getattr(self.args, key.replace("-", "_"), None)
        if flag_value is not None:
            return flag_value
        if key in self.file:
            return cast(self.file[key])
        if required:
            raise ConfigError(f"missing required setting {key!r} "
                              "(flag or config file)")
        return default


def _add_common_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--data", help="delimited series file, one row per time stamp")
    p.add_argument("--delimiter", help="cell delimiter (default: autodetect comma/tab)")
    p.add_argument("--header", action=argparse.BooleanOptionalAction, default=None,
                   help="skip one header line")
    p.add_argument("--forward-fill", action=argparse.BooleanOptionalAction, default=None,
                   help="repair missing cells from the previous time stamp")
    p.add_argument("--calendar", action=argparse.BooleanOptionalAction, default=None,
                   help="append hour-of-day/day-of-week/day-of-year variables")
    p.add_argument("--steps-per-day", type=int, help="sampling steps per day for --calendar")
    p.add_argument("--targets", type=_parse_int_list,
                   help="comma-separated predicted variable indices (default: all)")
    p.add_argument("--split", type=_parse_float_list,
                   help="train,valid,test fractions (default 0.6,0.2,0.2)")
    p.add_argument("--outdir", help="output directory (default $MTNET_OUTDIR or ./out)")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, help="memory block count (default 7)")
    p.add_argument("--window", type=int, help="block and query length T (default 24)")
    p.add_argument("--horizon", type=int, help="forecast horizon h (default 3)")
    p.add_argument("--hidden", type=int, help="embedding / GRU size d (default 32)")
    p.add_argument("--filters", type=int, help="conv filter count (default: hidden)")
    p.add_argument("--kernel-width", type=int, help="conv kernel width w (default 3)")
    p.add_argument("--ar-window", type=int, help="AR input length (default: window)")
    p.add_argument("--dropout", type=float, help="dropout rate (default 0.2)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--batch-size", type=int, help="mini-batch size (default 128)")
    p.add_argument("--epochs", type=int, help="epoch budget (default 200)")
    p.add_argument("--patience", type=int, help="early-stopping patience (default 20)")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    p.add_argument("--clip", type=float, help="gradient norm clip (default 10)")


def _load_series(s: Settings) -> RawSeries:
    path = s.get("data", str, required=True)
    delimiter = s.get("delimiter", str)
    delimiter = {"comma": ",", "tab": "\t"}.get(delimiter, delimiter)
    series = load_matrix(
        path,
        delimiter=delimiter,
        header=s.get("header", _parse_bool, False),
        forward_fill=s.get("forward-fill", _parse_bool, False),
    )
    if s.get("calendar", _parse_bool, False):
        series = add_calendar_features(series, steps_per_day=s.get("steps-per-day", int, 24))
    return series


def _split_spec(s: Settings) -> SplitSpec:
    fractions = s.get("split", _parse_float_list, (0.6, 0.2, 0.2))
    if len(fractions) != 3:
        raise ConfigError(f"--split needs three fractions, got {fractions}")
    return SplitSpec(*fractions)


def _outdir(s: Settings) -> Path:
    out = s.get("outdir", str, os.environ.get("MTNET_OUTDIR", "out"))
    return Path(out)


def _model_config(s: Settings, series: RawSeries) -> MTNetConfig:
    hidden = s.get("hidden", int, 32)
    window = s.get("window", int, 24)
    targets = s.get("targets", _parse_int_list, tuple(range(series.D)))
    return MTNetConfig.create(
        D=series.D,
        T=window,
        n=s.get("n", int, 7),
        h=s.get("horizon", int, 3),
        targets=targets,
        s_ar=s.get("ar-window", int, window),
        w=s.get("kernel-width", int, 3),
        d_c=s.get("filters", int, hidden),
        d=hidden,
        dropout_rate=s.get("dropout", float, 0.2),
    )


def _train_config(s: Settings) -> training.TrainConfig:
    return training.TrainConfig(
        learning_rate=s.get("lr", float, 1e-3),
        batch_size=s.get("batch-size", int, 128),
        max_epochs=s.get("epochs", int, 200),
        patience=s.get("patience", int, 20),
        seed=s.get("seed", int, 0),
        grad_clip_norm=s.get("clip", float, 10.0),
        grid_hidden=s.get("grid-hidden", _parse_int_list, (32, 50, 100)),
        grid_window=s.get("grid-window", _parse_int_list,
                          tuple(2 ** i for i in range(10))),
    )


def _config_record(cfg: MTNetConfig, tcfg: training.TrainConfig, data_path: str) -> str:
    lines = [
        f"data = {data_path}",
        f"n = {cfg.n}", f"window = {cfg.T}", f"horizon = {cfg.h}",
        f"targets = {','.join(str(i) for i in cfg.targets)}",
        f"hidden = {cfg.d}", f"filters = {cfg.encoder.d_c}",
        f"kernel-width = {cfg.encoder.w}", f"ar-window = {cfg.s_ar}",
        f"dropout = {cfg.encoder.dropout_rate}",
        f"lr = {tcfg.learning_rate}", f"batch-size = {tcfg.batch_size}",
        f"epochs = {tcfg.max_epochs}", f"patience = {tcfg.patience}",
        f"seed = {tcfg.seed}", f"clip = {tcfg.grad_clip_norm}",
    ]
    return "\n".join(lines) + "\n"


def _prepare(s: Settings):
    """Load, split and scale; returns everything the workflows share."""
    series = _load_series(s)
    train_rng, valid_rng, test_rng = chronological_split(series.T_total, _split_spec(s))
    scaler = fit_scaler(series.values[:, train_rng[0]:train_rng[1]])
    scaled = scaler.apply(series.values)
    return series, scaled, scaler, (train_rng, valid_rng, test_rng)


def cmd_train(args: argparse.Namespace) -> int:
    s = Settings(args)
    series, scaled, scaler, (train_rng, valid_rng, test_rng) = _prepare(s)
    cfg = _model_config(s, series)
    tcfg = _train_config(s)
    out = _outdir(s)

    train_samples = make_samples(scaled, cfg, train_rng)
    valid_samples = make_samples(scaled, cfg, valid_rng)
    model = MTNet(cfg, seed=tcfg.seed)
    result = training.fit(model, train_samples, valid_samples, tcfg)

    digest = {
        "epochs_run": str(len(result.history)),
        "best_epoch": str(result.best_epoch),
        "best_valid_loss": format(result.best_valid_loss, ".17g"),
    }
    save_checkpoint(out / "checkpoint.txt", model, scaler, tcfg.seed, digest)
    write_text_atomic(out / "history.tsv", training.format_history(result.history))
    write_text_atomic(out / "run_config.txt",
                      _config_record(cfg, tcfg, s.get("data", str, required=True)))

    test_samples = make_samples(scaled, cfg, test_rng)
    if test_samples:
        outcome = evaluation.evaluate_model(model.predict, test_samples, scaler,
                                            cfg.targets, cfg.h)
        write_text_atomic(out / "metrics.tsv", outcome.report.to_table())
        write_text_atomic(out / "report.json", outcome.report.to_json())
        print(f"test rrse {outcome.report.rrse:.6g}  corr {outcome.report.corr:.6g}")
    print(f"trained {len(result.history)} epochs, best valid loss "
          f"{result.best_valid_loss:.6g} at epoch {result.best_epoch}")
    print(f"checkpoint written to {out / 'checkpoint.txt'}")
    return 0


def _load_model_for_data(args, s: Settings):
    ckpt = load_checkpoint(args.checkpoint)
    series = _load_series(s)
    if series.D != ckpt.config.D:
        raise ConfigError(f"dataset has {series.D} variables, checkpoint expects "
                          f"{ckpt.config.D}")
    model = ckpt.build_model()
    scaler = ckpt.scaler
    if scaler is None:
        raise ConfigError("checkpoint carries no scaler; cannot evaluate")
    return ckpt, series, model, scaler


def cmd_evaluate(args: argparse.Namespace) -> int:
    s = Settings(args)
    ckpt, series, model, scaler = _load_model_for_data(args, s)
    cfg = ckpt.config
    if args.horizon is not None and args.horizon != cfg.h:
        raise ConfigError(f"model was trained for horizon {cfg.h}; "
                          f"evaluating at {args.horizon} is not supported "
                          "(one model per horizon)")
    _, _, test_rng = chronological_split(series.T_total, _split_spec(s))
    scaled = scaler.apply(series.values)
    samples = make_samples(scaled, cfg, test_rng)
    if not samples:
        raise ConfigError("test partition yields no evaluable samples")
    outcome = evaluation.evaluate_model(model.predict, samples, scaler, cfg.targets,
                                        cfg.h, rrse_per_variable=args.rrse_per_variable)
    out = _outdir(s)
    if args.traces:
        evaluation.export_traces(outcome.traces, out / "traces.tsv")
        outcome.report.traces_path = str(out / "traces.tsv")
    write_text_atomic(out / "metrics.tsv", outcome.report.to_table())
    write_text_atomic(out / "report.json", outcome.report.to_json())
    print(outcome.report.to_table(), end="")
    return 0


def _requested_times(args, lo: int, hi: int) -> range:
    if args.at is not None:
        return range(args.at, args.at + 1)
    start = args.start if args.start is not None else lo
    stop = args.stop if args.stop is not None else hi
    return range(start, stop)


def cmd_predict(args: argparse.Namespace) -> int:
    s = Settings(args)
    ckpt, series, model, scaler = _load_model_for_data(args, s)
    cfg = ckpt.config
    _, _, test_rng = chronological_split(series.T_total, _split_spec(s))
    times = _requested_times(args, *test_rng)
    scaled = scaler.apply(series.values)
    samples = make_samples(scaled, cfg, (times.start, times.stop))
    if len(samples) != len(times):
        raise ConfigError(f"requested times [{times.start}, {times.stop}) are not all "
                          "predictable with this window configuration")
    header = ["target_time"] + [f"pred_{i}" for i in cfg.targets] \
        + [f"truth_{i}" for i in cfg.targets]
    lines = ["\t".join(header)]
    for sample in samples:
        pred, _ = model.predict(sample)
        pred = scaler.invert_targets(pred[:, None], cfg.targets)[:, 0]
        truth = scaler.invert_targets(sample.target[:, None], cfg.targets)[:, 0]
        cells = [str(sample.target_time)]
        cells += [format(v, ".17g") for v in pred]
        cells += [format(v, ".17g") for v in truth]
        lines.append("\t".join(cells))
    out_path = Path(args.out) if args.out else _outdir(s) / "predictions.tsv"
    write_text_atomic(out_path, "\n".join(lines) + "\n")
    print(f"wrote {len(samples)} predictions to {out_path}")
    return 0


def cmd_export_attention(args: argparse.Namespace) -> int:
    s = Settings(args)
    ckpt, series, model, scaler = _load_model_for_data(args, s)
    cfg = ckpt.config
    _, _, test_rng = chronological_split(series.T_total, _split_spec(s))
    times = _requested_times(args, *test_rng)
    if times.start < test_rng[0] or times.stop > test_rng[1]:
        raise ConfigError(f"requested times [{times.start}, {times.stop}) fall outside "
                          f"the test range [{test_rng[0]}, {test_rng[1]})")
    scaled = scaler.apply(series.values)
    samples = make_samples(scaled, cfg, (times.start, times.stop))
    if len(samples) != len(times):
        raise ConfigError("some requested times lack the history needed for a sample")
    traces = [model.predict(sample)[1] for sample in samples]
    out_path = Path(args.out) if args.out else _outdir(s) / "traces.tsv"
    evaluation.export_traces(traces, out_path)
    print(f"wrote {len(traces)} attention traces to {out_path}")
    return 0


def cmd_grid_search(args: argparse.Namespace) -> int:
    s = Settings(args)
    series, scaled, scaler, (train_rng, valid_rng, test_rng) = _prepare(s)
    base = _model_config(s, series)
    tcfg = _train_config(s)
    out = _outdir(s)
    result = training.grid_search(scaled, train_rng, valid_rng, base, tcfg)
    write_text_atomic(out / "grid.tsv", training.format_grid_table(result.rows))
    digest = {"grid_best_index": str(result.best_index),
              "best_valid_loss": format(result.best_fit.best_valid_loss, ".17g")}
    save_checkpoint(out / "checkpoint.txt", result.best_model, scaler, tcfg.seed, digest)
    best_row = result.rows[result.best_index]
    print(f"best grid point: hidden={best_row.hidden} window={best_row.window} "
          f"valid_loss={best_row.valid_loss:.6g}")
    print(f"grid table written to {out / 'grid.tsv'}")
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    s = Settings(args)
    series = _load_series(s)
    train_rng, valid_rng, test_rng = chronological_split(series.T_total, _split_spec(s))
    horizon = s.get("horizon", int, 3)
    targets = s.get("targets", _parse_int_list, tuple(range(series.D)))
    window_grid = s.get("window-grid", _parse_int_list, baselines.DEFAULT_WINDOW_GRID)
    lambda_grid = s.get("lambda-grid", _parse_float_list, baselines.DEFAULT_LAMBDA_GRID)

    selection = baselines.select_linear_baseline(
        series.values, train_rng, valid_rng, horizon, method=args.method,
        window_grid=window_grid, lambda_grid=lambda_grid, variables=targets)
    model = selection.model
    times, preds = baselines.predict_range(model, series.values, test_rng)
    truth = series.values[model.variables][:, times]

    per_var = evaluation.per_variable_corr(truth, preds)
    finite = [c for c in per_var if np.isfinite(c)]
    report = evaluation.EvalReport(
        horizon=horizon, sample_count=len(times),
        rmse=evaluation.rmse(truth, preds), mae=evaluation.mae(truth, preds),
        rrse=evaluation.rrse(truth, preds), corr=float(np.mean(finite)),
        corr_per_variable=per_var, corr_skipped=len(per_var) - len(finite))
    out = _outdir(s)
    write_text_atomic(out / f"baseline_{args.method}_metrics.tsv", report.to_table())
    write_text_atomic(out / f"baseline_{args.method}_report.json", report.to_json())
    print(f"{args.method}: window={model.window} lambda={model.ridge_lambda:g} "
          f"valid_rrse={selection.valid_rrse:.6g}")
    print(report.to_table(), end="")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    series = synth.sinusoid_mixture(
        length=args.length, n_vars=args.vars,
        periods=args.periods, amplitudes=args.amplitudes,
        noise=args.noise, seed=args.seed)
    rows = [",".join(format(v, ".17g") for v in series.values[:, t])
            for t in range(series.T_total)]
    write_text_atomic(args.out, "\n".join(rows) + "\n")
    print(f"wrote {series.T_total} x {series.D} synthetic series to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtnet",
        description="Memory-block attention forecaster with linear baselines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    _add_common_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on the test partition")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--horizon", type=int, help="must match the trained horizon")
    p.add_argument("--traces", action=argparse.BooleanOptionalAction, default=False,
                   help="also export attention traces")
    p.add_argument("--rrse-per-variable", action="store_true",
                   help="normalize rrse per variable instead of by the grand mean")
    _add_common_data_flags(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("predict", help="write rolling predictions for a time range")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--at", type=int, help="single target time index")
    p.add_argument("--start", type=int, help="range start (default: test start)")
    p.add_argument("--stop", type=int, help="range stop, exclusive (default: test end)")
    p.add_argument("--out", help="output file (default <outdir>/predictions.tsv)")
    _add_common_data_flags(p)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("export-attention",
                       help="write attention weight records for chosen time stamps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--at", type=int, help="single target time index")
    p.add_argument("--start", type=int)
    p.add_argument("--stop", type=int)
    p.add_argument("--out", help="output file (default <outdir>/traces.tsv)")
    _add_common_data_flags(p)
    p.set_defaults(fn=cmd_export_attention)

    p = sub.add_parser("grid-search", help="train one model per grid point")
    _add_common_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--grid-hidden", type=_parse_int_list,
                   help="hidden sizes to try (default 32,50,100)")
    p.add_argument("--grid-window", type=_parse_int_list,
                   help="window lengths to try (default 1,2,...,512)")
    p.set_defaults(fn=cmd_grid_search)

    p = sub.add_parser("baseline", help="fit and score a linear baseline")
    p.add_argument("--method", required=True, choices=["ar", "ridge"],
                   help="ar (plain least squares) or ridge")
    p.add_argument("--horizon", type=int)
    p.add_argument("--window-grid", type=_parse_int_list)
    p.add_argument("--lambda-grid", type=_parse_float_list)
    _add_common_data_flags(p)
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("synth", help="generate a synthetic sinusoid-mixture dataset")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--vars", type=int, default=1)
    p.add_argument("--periods", type=_parse_float_list, default=(24.0,))
    p.add_argument("--amplitudes", type=_parse_float_list, default=None)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MtnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
