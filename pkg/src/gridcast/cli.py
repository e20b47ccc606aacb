"""Command-line interface: one subcommand per pipeline stage.

Every command is deterministic given (inputs, config, seed), writes its
outputs under a target directory, and drops a ``manifest.json`` recording the
invocation.  Exit codes: 0 success, 1 usage/config problem, 2 data/schema
problem, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import evaluation as E
from . import model as M
from . import training as TR
from .configio import dataclass_from_kv, load_kv
from .errors import ConfigError, DataError, GridcastError, NumericalAbort
from .graph import load_graph
from .pipeline import (SequenceDataset, SplitSpec, load_processed,
                       run_pipeline, save_processed)
from .seeding import SUBSTREAMS
from .synth import SynthConfig, generate_synthetic, load_raw_dataset, save_raw_dataset

DEFAULT_SPLITS = ("train=2019-01-01:2020-01-01,"
                  "validation=2020-01-01:2020-07-01,"
                  "test=2020-07-01:2021-01-01")


class _UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _manifest(out_dir: Path, command: str, seed, inputs: dict, outputs: list[str],
              started: float, config_path=None) -> None:
    payload = {
        "command": command,
        "config": str(config_path) if config_path else None,
        "seed": seed,
        "rng_substreams": SUBSTREAMS,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": outputs,
        "artifact_version": __version__,
        "duration_s": round(time.time() - started, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(payload, indent=1))


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- synth ------------------------------------------------------------------

def cmd_synth(args) -> None:
    started = time.time()
    cfg = SynthConfig() if args.config is None else dataclass_from_kv(
        SynthConfig, load_kv(args.config), where=Path(args.config).name)
    out = _out_dir(args.out)
    data = generate_synthetic(cfg, seed=args.seed)
    save_raw_dataset(data, out)
    (out / "synth_config.json").write_text(json.dumps(cfg.to_dict(), indent=1))
    _manifest(out, "synth", args.seed, {}, ["nodes.csv", "edges.csv", "weather.csv",
                                            "sequence.csv", "synth_config.json"],
              started, config_path=args.config)


# -- preprocess ----------------------------------------------------------------

def cmd_preprocess(args) -> None:
    started = time.time()
    raw = Path(args.raw)
    spec = SplitSpec.parse(args.split_spec)
    graph, weather, sequence = load_raw_dataset(raw)
    processed = run_pipeline(weather, sequence, spec)
    raw_manifest = raw / "manifest.json"
    if raw_manifest.exists():
        processed.source_seed = json.loads(raw_manifest.read_text()).get("seed")
    out = _out_dir(args.out)
    save_processed(processed, out)
    shutil.copy(raw / "nodes.csv", out / "nodes.csv")
    shutil.copy(raw / "edges.csv", out / "edges.csv")
    _manifest(out, "preprocess", None, {"raw": raw},
              ["train.csv", "validation.csv", "test.csv", "scaler.json",
               "dataset.json", "nodes.csv", "edges.csv"], started)


# -- train ------------------------------------------------------------------------

def _load_data_dir(data_dir: str):
    data_dir = Path(data_dir)
    processed = load_processed(data_dir)
    graph = load_graph(data_dir / "nodes.csv", data_dir / "edges.csv")
    if processed.states != graph.node_names():
        raise DataError("processed dataset states do not match the graph node set")
    return processed, graph


def cmd_train(args) -> None:
    started = time.time()
    processed, graph = _load_data_dir(args.data)
    run = dataclass_from_kv(TR.RunConfig, load_kv(args.model_config),
                            where=Path(args.model_config).name)
    if args.epochs is not None:
        run.epochs = args.epochs
    gin = M.build_graph_inputs(graph)
    out = _out_dir(args.out)

    def log(line):
        print(line, flush=True)

    best_params, state = TR.train(run, processed, gin, log=log if args.verbose else None)
    model = M.Forecaster(config=run.model_config(len(processed.feature_columns)),
                         params=best_params, graph_inputs=gin,
                         scaler=processed.scaler,
                         feature_columns=processed.feature_columns, seed=run.seed)
    M.save_checkpoint(out / "checkpoint.json", model)
    TR.save_history(out / "history.csv", state)
    _manifest(out, "train", run.seed,
              {"data": args.data, "model_config": args.model_config},
              ["checkpoint.json", "history.csv"], started,
              config_path=args.model_config)


# -- evaluate ------------------------------------------------------------------------

def cmd_evaluate(args) -> None:
    started = time.time()
    processed, graph = _load_data_dir(args.data)
    model = M.load_checkpoint(args.checkpoint, graph)
    data = SequenceDataset(processed.splits[args.split], model.config.seq_len)
    frame = E.predictions_frame(model, data)
    out = _out_dir(args.out)
    formatted = frame.copy()
    formatted["actual_mw"] = formatted["actual_mw"].map(repr)
    formatted["predicted_mw"] = formatted["predicted_mw"].map(repr)
    formatted.to_csv(out / "predictions.csv", index=False)
    reports, curve = E.peak_offpeak_report(frame)
    E.save_report(out, args.name, reports, curve)
    _manifest(out, "evaluate", model.seed,
              {"checkpoint": args.checkpoint, "data": args.data, "split": args.split},
              ["predictions.csv", "report.json", "report.csv", "hourly_curve.csv"],
              started)


# -- compare -------------------------------------------------------------------------

def cmd_compare(args) -> None:
    started = time.time()
    entries = [E.load_report(path) for path in args.reports]
    table = E.compare_models(entries)
    out = _out_dir(args.out)
    E.save_comparison(out / "comparison.csv", table)
    E.save_comparison(out / "comparison.json", table)
    _manifest(out, "compare", None, {"reports": ",".join(args.reports)},
              ["comparison.csv", "comparison.json"], started)
    width = max(len(row["model"]) for row in table)
    print(f"{'model':<{width}}  {'mae':>10}  {'rmse':>10}  {'mape_pct':>9}  {'mae_gain_pct':>12}")
    for row in table:
        print(f"{row['model']:<{width}}  {row['mae']:>10.2f}  {row['rmse']:>10.2f}  "
              f"{row['mape']:>9.2f}  {row['mae_improvement_pct']:>12.2f}")


# -- predict -------------------------------------------------------------------------

def cmd_predict(args) -> None:
    started = time.time()
    try:
        at = pd.Timestamp(args.at)
    except ValueError as exc:
        raise _UsageError(f"malformed timestamp {args.at!r}: {exc}") from exc
    processed, graph = _load_data_dir(args.data)
    model = M.load_checkpoint(args.checkpoint, graph)
    frame = None
    for split in ("test", "validation", "train"):
        candidate = processed.splits[split].frame
        if ((pd.to_datetime(candidate["timestamp"]) == at).any()):
            frame = candidate
            break
    if frame is None:
        raise DataError(f"timestamp {at} not present in any split")
    window = M.latest_window(frame, processed.feature_columns, processed.states,
                             model.config.seq_len, at)
    forecasts = model.predict_next_hour(window, np.arange(len(processed.states)))
    out = _out_dir(args.out)
    path = out / "forecast.csv"
    with open(path, "w") as fh:
        fh.write("state,timestamp,forecast_mw\n")
        for state_name, value in zip(processed.states, forecasts):
            fh.write(f"{state_name},{at + pd.Timedelta(hours=1)},{float(value)!r}\n")
    _manifest(out, "predict", model.seed,
              {"checkpoint": args.checkpoint, "data": args.data, "at": str(at)},
              ["forecast.csv"], started)
    print(path)


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridcast",
                     description="Spatio-temporal load forecasting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic grid dataset")
    p.add_argument("--config", default=None, help="key-value generator config")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="run the preprocessing pipeline")
    p.add_argument("--raw", required=True, help="raw dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--split-spec", default=DEFAULT_SPLITS,
                   help="train=LO:HI,validation=LO:HI,test=LO:HI (half-open)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a forecaster variant")
    p.add_argument("--data", required=True, help="processed dataset directory")
    p.add_argument("--model-config", required=True, help="key-value run config")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None, help="override the epoch cap")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=("train", "validation", "test"))
    p.add_argument("--name", default="model", help="model name used in reports")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="rank evaluation reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("predict", help="forecast the next hour for every node")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--at", required=True, help="window end timestamp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, GridcastError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
