"""Command-line front end.

Exit codes: 0 success, 1 some experiment runs failed, 2 input data could not
be ingested, 3 a computation failed, 64 bad usage.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from ._io import atomic_write_text
from .errors import ComputationError, ForecastError, IngestError
from .fixtures import FIXTURES, make_fixture
from .lagstats import DEFAULT_MAX_LAG, pacf
from .lstm import load_checkpoint, save_checkpoint
from .metrics import evaluate
from .pipeline import (
    HORIZONS,
    METRICS,
    VARIANTS,
    Comparison,
    ExperimentConfig,
    MinMaxScaler,
    denoise_close,
    denoise_summary,
    fit_model,
    format_timestamp,
    ingest_csv,
    predict_test,
    prepare_dataset,
    run_matrix,
    write_bars_csv,
)
from .wavelet import MAX_LEVELS, PADDING_MODES

EXIT_OK, EXIT_PARTIAL, EXIT_INGEST, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2, 3, 64

log = logging.getLogger("denoise_forecast.cli")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def positive_int(text) -> int:
    try:
        v = int(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def positive_float(text) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def unit_interval(text) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1), got {v}")
    return v


def share(text) -> float:
    v = positive_float(text)
    if v > 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {v}")
    return v


def levels(text) -> int:
    v = positive_int(text)
    if v > MAX_LEVELS:
        raise argparse.ArgumentTypeError(f"must be <= {MAX_LEVELS}, got {v}")
    return v


def _split(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


def int_list(text) -> list[int]:
    out = []
    for t in _split(text):
        try:
            out.append(int(t))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected integers, got {t!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def hidden_sizes(text) -> tuple[int, ...]:
    return tuple(positive_int(t) for t in int_list(text))


def _choice_list(options, name):
    def parse(text):
        items = _split(text)
        if items == ["all"]:
            return list(options)
        bad = [t for t in items if t not in options]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"unknown {name} {bad}; choose from {list(options)} or 'all'")
        return items

    return parse


variant_list = _choice_list(VARIANTS, "variants")
horizon_list = _choice_list(HORIZONS, "horizons")


def column_mapping(text) -> dict:
    try:
        d = json.loads(text) if isinstance(text, str) else dict(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError("expected a JSON object such as '{\"close\": \"Close\"}'") from None
    if not isinstance(d, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return d


# ---------------------------------------------------------------- parser


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=default(0), help="seed for every random draw (default 0)")
    p.add_argument("--config", default=default(None), help="JSON file of option values; command-line flags win")
    p.add_argument("--output-dir", default=default("output"), help="directory for written files (default ./output)")
    p.add_argument("-v", "--verbose", action="store_true", default=default(False))


def _data_options(p) -> None:
    p.add_argument("--input", required=True, help="OHLCV CSV with a header row")
    p.add_argument("--columns", type=column_mapping, default=None, help="JSON map from field name to CSV header")


def _denoise_options(p) -> None:
    p.add_argument("--levels", type=levels, default=4, help="wavelet decomposition levels")
    p.add_argument("--padding", choices=PADDING_MODES, default="symmetric")
    p.add_argument("--ssa-m", type=positive_int, default=10, help="SSA embedding dimension")
    p.add_argument("--ssa-threshold", type=share, default=0.9999, help="cumulative eigenvalue share to keep")
    p.add_argument("--ssa-center", action="store_true", help="subtract the mean before SSA")


def _model_options(p) -> None:
    _denoise_options(p)
    p.add_argument("--hidden", type=hidden_sizes, default=(150, 50), help="LSTM layer sizes, e.g. 150,50")
    p.add_argument("--epochs", type=positive_int, default=10)
    p.add_argument("--batch-size", type=positive_int, default=32)
    p.add_argument("--learning-rate", type=positive_float, default=1e-3)
    p.add_argument("--dropout", type=unit_interval, default=None, help="override the variant's dropout rate")
    p.add_argument("--lag", type=positive_int, default=None, help="fixed window length instead of the PACF choice")
    p.add_argument("--max-lag", type=positive_int, default=DEFAULT_MAX_LAG)
    p.add_argument("--causal-denoise", action="store_true", help="smooth the training prefix only, then extend point by point")
    p.add_argument("--min-bars", type=positive_int, default=500)


def build_parser() -> Parser:
    parser = Parser(prog="denoise-forecast", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"denoise-forecast {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, allow_abbrev=False)
        _global_options(p, suppress=True)
        return p

    p = add("ingest", "validate a bar CSV and summarise it")
    _data_options(p)

    p = add("analyze", "PACF of the close series and the selected input lag")
    _data_options(p)
    p.add_argument("--pacf", action="store_true", help="compute the PACF (the only analysis; accepted for clarity)")
    p.add_argument("--max-lag", type=positive_int, default=DEFAULT_MAX_LAG)
    p.add_argument("--rule", choices=("cutoff", "largest"), default="cutoff")
    p.add_argument("--format", choices=("json", "table"), default="json")

    p = add("denoise", "smooth the close series and write it with a JSON sidecar")
    _data_options(p)
    p.add_argument("--method", choices=("wavelet", "ssa"), required=True)
    _denoise_options(p)
    p.add_argument("--out", default=None, help="output CSV (default OUTPUT_DIR/denoised.csv)")

    p = add("train", "train one variant on the data before a horizon's test window")
    _data_options(p)
    p.add_argument("--variant", choices=list(VARIANTS), default="lstm")
    p.add_argument("--horizon", choices=list(HORIZONS), default="short")
    _model_options(p)
    p.add_argument("--checkpoint", default=None, help="checkpoint path (default OUTPUT_DIR/model.npz)")

    p = add("evaluate", "score a checkpoint on its horizon's test window")
    _data_options(p)
    p.add_argument("--checkpoint", required=True)

    p = add("run", "train and score a matrix of variants, horizons and seeds")
    _data_options(p)
    p.add_argument("--variants", type=variant_list, default=list(VARIANTS), help="comma list or 'all'")
    p.add_argument("--horizons", type=horizon_list, default=list(HORIZONS), help="comma list or 'all'")
    p.add_argument("--seeds", type=int_list, default=None, help="comma list (default: --seed)")
    _model_options(p)

    p = add("report", "print the comparison tables of a saved report")
    p.add_argument("--report", required=True, help="report.json written by 'run'")
    p.add_argument("--format", choices=("table", "json"), default="table")

    p = add("fixtures", "regenerate the synthetic datasets")
    p.add_argument("--name", choices=[*FIXTURES, "all"], default="all")
    p.add_argument("--fixture-seed", type=int, default=None, help="override the fixture's named seed")
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _explicit_dests(actions, argv) -> set[str]:
    given = set()
    for a in actions:
        for opt in a.option_strings:
            if any(tok == opt or tok.startswith(opt + "=") for tok in argv):
                given.add(a.dest)
    return given


def _coerce(action, value):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        if not isinstance(value, bool):
            raise argparse.ArgumentTypeError(f"expected true or false, got {value!r}")
        return value
    if value is None:
        return None
    if action.type is not None:
        value = action.type(value if isinstance(value, (list, tuple, dict)) else str(value))
    if action.choices is not None and value not in action.choices:
        raise argparse.ArgumentTypeError(f"invalid choice {value!r}; choose from {list(action.choices)}")
    return value


def apply_config(parser, args, argv) -> None:
    """Fill options from the --config JSON file where no flag was given."""
    if not args.config:
        return
    try:
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(config, dict):
        parser.error(f"config {args.config} must hold a JSON object")
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions if a.option_strings and a.dest not in ("help", "config")}
    explicit = _explicit_dests(sub._actions + parser._actions, argv)
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            log.warning("config key %r does not apply to '%s'; ignored", key, args.command)
            continue
        if dest in explicit:
            log.warning("--%s given on the command line overrides config value %r", dest.replace("_", "-"), value)
            continue
        try:
            setattr(args, dest, _coerce(actions[dest], value))
        except argparse.ArgumentTypeError as exc:
            parser.error(f"config key {key!r}: {exc}")


# ---------------------------------------------------------------- commands


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _bars(args):
    return ingest_csv(args.input, args.columns)


def _experiment_config(args, variant, horizon, seed) -> ExperimentConfig:
    return ExperimentConfig(
        variant=variant,
        horizon=horizon,
        wavelet_levels=args.levels,
        wavelet_padding=args.padding,
        ssa_m=args.ssa_m,
        ssa_threshold=args.ssa_threshold,
        ssa_center=args.ssa_center,
        max_lag=args.max_lag,
        lag=args.lag,
        hidden=tuple(args.hidden),
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        dropout_rate=args.dropout,
        seed=seed,
        causal_denoise=args.causal_denoise,
        min_bars=args.min_bars,
    )


def cmd_ingest(args) -> int:
    bars = _bars(args)
    _emit(
        {
            "bars": len(bars),
            "dropped": bars.dropped,
            "diagnostics": [{"line": d.line, "reason": d.reason} for d in bars.diagnostics],
            "first": format_timestamp(bars.timestamps[0]),
            "last": format_timestamp(bars.timestamps[-1]),
            "data_hash": bars.data_hash(),
        }
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    bars = _bars(args)
    res = pacf(bars.close, args.max_lag, rule=args.rule)
    if args.format == "table":
        print(f"{'lag':>4} {'pacf':>10}  significant (|pacf| > {res.confidence_bound:.4f})")
        for k in range(1, res.max_lag + 1):
            print(f"{k:>4} {res.values[k]:>10.5f}  {'*' if abs(res.values[k]) > res.confidence_bound else ''}")
        print(f"selected lag: {res.selected_lag}")
        return EXIT_OK
    _emit(
        {
            "n": len(bars),
            "max_lag": res.max_lag,
            "rule": res.rule,
            "confidence_bound": res.confidence_bound,
            "selected_lag": res.selected_lag,
            "pacf": [
                {"lag": k, "value": float(res.values[k]), "significant": bool(abs(res.values[k]) > res.confidence_bound)}
                for k in range(1, res.max_lag + 1)
            ],
        }
    )
    return EXIT_OK


def cmd_denoise(args) -> int:
    bars = _bars(args)
    variant = "wt-lstm" if args.method == "wavelet" else "ssa-lstm"
    cfg = ExperimentConfig(
        variant=variant,
        wavelet_levels=args.levels,
        wavelet_padding=args.padding,
        ssa_m=args.ssa_m,
        ssa_threshold=args.ssa_threshold,
        ssa_center=args.ssa_center,
    )
    smoothed = denoise_close(bars.close, cfg)
    summary = denoise_summary(bars.close, cfg)
    summary["input_variance"] = float(np.var(bars.close))
    summary["output_variance"] = float(np.var(smoothed))
    out = args.out or os.path.join(args.output_dir, "denoised.csv")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "raw_close", "smoothed_close"])
    for t, raw, s in zip(bars.timestamps, bars.close, smoothed):
        w.writerow([format_timestamp(t), repr(float(raw)), repr(float(s))])
    atomic_write_text(out, buf.getvalue())
    sidecar = os.path.splitext(out)[0] + ".json"
    atomic_write_text(sidecar, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _emit({"output": out, "sidecar": sidecar, **summary})
    return EXIT_OK


def cmd_train(args) -> int:
    bars = _bars(args)
    cfg = _experiment_config(args, args.variant, args.horizon, args.seed)
    ds, summary = prepare_dataset(bars, cfg)
    net, losses = fit_model(ds, cfg)
    path = args.checkpoint or os.path.join(args.output_dir, "model.npz")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    metadata = {
        "config": cfg.to_dict(),
        "lag": ds.lag,
        "features": list(ds.feature_names),
        "feature_scaler": ds.feature_scaler.to_dict(),
        "target_scaler": ds.target_scaler.to_dict(),
        "data_hash": bars.data_hash(),
        "losses": losses,
    }
    save_checkpoint(net, path, metadata)
    _emit({"checkpoint": path, "lag": ds.lag, "n_train": ds.n_train, "losses": losses, "denoise": summary})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bars = _bars(args)
    net, meta = load_checkpoint(args.checkpoint)
    cfg = replace(ExperimentConfig.from_dict(meta["config"]), lag=meta["lag"])
    scalers = (
        MinMaxScaler.from_dict(meta["feature_scaler"]),
        MinMaxScaler.from_dict(meta["target_scaler"], scalar=True),
    )
    ds, _ = prepare_dataset(bars, cfg, scalers=scalers)
    predictions = predict_test(net, ds)
    actuals = ds.targets[ds.test_index]
    _emit(
        {
            "variant": cfg.variant,
            "horizon": cfg.horizon,
            "lag": ds.lag,
            "same_data": meta.get("data_hash") == bars.data_hash(),
            "metrics": evaluate(actuals, predictions).to_dict(),
        }
    )
    return EXIT_OK


def cmd_run(args) -> int:
    bars = _bars(args)
    seeds = args.seeds if args.seeds is not None else [args.seed]
    base = _experiment_config(args, args.variants[0], args.horizons[0], seeds[0])
    report = run_matrix(bars, base, args.variants, args.horizons, seeds, log=log.error)
    report.check_complete(args.variants, args.horizons, seeds)
    written = report.write(args.output_dir)
    if report.entries:
        sys.stdout.write(report.to_table())
    log.info("report written to %s", written["json"])
    if report.failures:
        return EXIT_PARTIAL if report.entries else EXIT_COMPUTE
    return EXIT_OK


def cmd_report(args) -> int:
    with open(args.report, encoding="utf-8") as fh:
        data = json.load(fh)
    if args.format == "json":
        _emit(data["comparisons"])
        return EXIT_OK
    tables = []
    for c in data["comparisons"]:
        rows = [(r["variant"], {k: r[k] for k in METRICS}) for r in c["rows"]]
        tables.append(Comparison(c["horizon"], c["seed"], rows, c["improvement_pct_vs_lstm"]).to_table())
    sys.stdout.write("\n\n".join(tables) + "\n")
    return EXIT_OK


def cmd_fixtures(args) -> int:
    names = list(FIXTURES) if args.name == "all" else [args.name]
    os.makedirs(args.output_dir, exist_ok=True)
    written = {}
    for name in names:
        path = os.path.join(args.output_dir, f"{name}.csv")
        write_bars_csv(make_fixture(name, args.fixture_seed), path)
        written[name] = path
    _emit(written)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "analyze": cmd_analyze,
    "denoise": cmd_denoise,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "run": cmd_run,
    "report": cmd_report,
    "fixtures": cmd_fixtures,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        apply_config(parser, args, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except IngestError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_INGEST
    except (ComputationError, ForecastError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_COMPUTE
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_INGEST


if __name__ == "__main__":
    sys.exit(main())
