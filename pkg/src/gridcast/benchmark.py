"""End-to-end synthetic benchmark: four variants plus a multi-seed sweep.

Generates the default 27-node / two-year dataset once, trains every
forecaster variant on it, then re-trains the attention and sequence-only
variants across a set of seeds to compare their test error distributions.
The architecture and epoch budget here are sized for a single desktop core;
they are intentionally smaller than the reference hyperparameters.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from . import evaluation as E
from . import model as M
from . import training as TR
from .pipeline import SequenceDataset, SplitSpec, run_pipeline
from .synth import SynthConfig, generate_synthetic

BENCHMARK_SPLITS = SplitSpec(
    train=(pd.Timestamp("2019-01-01"), pd.Timestamp("2020-01-01")),
    validation=(pd.Timestamp("2020-01-01"), pd.Timestamp("2020-07-01")),
    test=(pd.Timestamp("2020-07-01"), pd.Timestamp("2021-01-01")),
)


@dataclass
class BenchmarkSettings:
    dataset_seed: int = 42
    seeds: tuple[int, ...] = (42, 43, 44, 45, 46)
    synth: SynthConfig = field(default_factory=SynthConfig)
    epochs: int = 2
    seq_len: int = 8
    gat_out: int = 16
    heads: int = 4
    lstm_hidden: int = 48
    lstm_layers: int = 2
    gat_dropout: float = 0.1
    lstm_dropout: float = 0.1
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5

    def run_config(self, variant: str, seed: int) -> TR.RunConfig:
        return TR.RunConfig(
            variant=variant, seq_len=self.seq_len, gat_out=self.gat_out,
            heads=self.heads, lstm_hidden=self.lstm_hidden,
            lstm_layers=self.lstm_layers, gat_dropout=self.gat_dropout,
            lstm_dropout=self.lstm_dropout, learning_rate=self.learning_rate,
            weight_decay=self.weight_decay, epochs=self.epochs, seed=seed)


def prepare_dataset(settings: BenchmarkSettings, log=print):
    log(f"generating synthetic grid (seed {settings.dataset_seed}, "
        f"{settings.synth.nodes} nodes, {settings.synth.days} days)")
    data = generate_synthetic(settings.synth, seed=settings.dataset_seed)
    log("running preprocessing pipeline")
    processed = run_pipeline(data.weather, data.sequence, BENCHMARK_SPLITS)
    return data.graph, processed


def train_and_score(settings: BenchmarkSettings, processed, gin, variant: str,
                    seed: int, log=print) -> dict:
    run = settings.run_config(variant, seed)
    t0 = time.time()
    best_params, state = TR.train(run, processed, gin)
    train_time = time.time() - t0
    model = M.Forecaster(config=run.model_config(len(processed.feature_columns)),
                         params=best_params, graph_inputs=gin,
                         scaler=processed.scaler,
                         feature_columns=processed.feature_columns, seed=seed)
    test_data = SequenceDataset(processed.splits["test"], run.seq_len)
    frame = E.predictions_frame(model, test_data)
    reports, curve = E.peak_offpeak_report(frame)
    overall = reports[0]
    log(f"  {variant} seed {seed}: mae {overall.mae:.2f} MW, rmse {overall.rmse:.2f} MW,"
        f" mape {overall.mape:.2f}% ({train_time:.0f}s, {len(state.history)} epochs)")
    return {
        "variant": variant,
        "seed": seed,
        "mae": overall.mae,
        "rmse": overall.rmse,
        "mape": overall.mape,
        "epochs_run": len(state.history),
        "final_val_loss": state.history[-1]["val_loss"],
        "best_val_loss": state.best_val_loss,
        "train_seconds": round(train_time, 1),
        "slices": [r.to_dict() for r in reports],
        "curve": curve.rows(),
    }


def run_benchmark(settings: BenchmarkSettings | None = None, out_dir=None,
                  log=print) -> dict:
    """Train all variants plus the seed sweep; return the summary dict."""
    settings = settings or BenchmarkSettings()
    started = time.time()
    graph, processed = prepare_dataset(settings, log=log)
    gin = M.build_graph_inputs(graph)

    log("training all variants at the dataset seed")
    variant_results = {}
    for variant in M.VARIANTS:
        variant_results[variant] = train_and_score(
            settings, processed, gin, variant, settings.seeds[0], log=log)

    log("seed sweep: attention vs sequence-only")
    sweep = {"gat-lstm": [variant_results["gat-lstm"]],
             "lstm": [variant_results["lstm"]]}
    for seed in settings.seeds[1:]:
        for variant in ("gat-lstm", "lstm"):
            sweep[variant].append(
                train_and_score(settings, processed, gin, variant, seed, log=log))

    gat_maes = [r["mae"] for r in sweep["gat-lstm"]]
    lstm_maes = [r["mae"] for r in sweep["lstm"]]
    per_seed_losses = sum(1 for g, l in zip(gat_maes, lstm_maes) if g > l)
    comparison = E.compare_models(
        [(variant, E.MetricReport(slice_label="overall", mae=r["mae"], rmse=r["rmse"],
                                  mape=r["mape"], n=1))
         for variant, r in variant_results.items()])
    summary = {
        "settings": {
            "dataset_seed": settings.dataset_seed,
            "seeds": list(settings.seeds),
            "coupling": settings.synth.coupling,
            "nodes": settings.synth.nodes,
            "days": settings.synth.days,
            "epochs": settings.epochs,
            "seq_len": settings.seq_len,
        },
        "variants": variant_results,
        "sweep": sweep,
        "gat_median_mae": statistics.median(gat_maes),
        "lstm_median_mae": statistics.median(lstm_maes),
        "per_seed_gat_losses": per_seed_losses,
        "comparison": comparison,
        "wall_seconds": round(time.time() - started, 1),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "benchmark.json").write_text(json.dumps(summary, indent=1))
        E.save_comparison(out_dir / "comparison.csv", comparison)
        log(f"wrote {out_dir / 'benchmark.json'}")
    log(f"benchmark wall time: {summary['wall_seconds']:.0f}s")
    return summary
