"""Accuracy metrics and machine-readable report exports.

All metrics are computed on megawatt values after inverse scaling.  Rows are
bucketed by forecast hour-of-day: peak covers 07-10 and 16-19, off-peak
covers 00-06 and 20-23; hours 11-15 appear only in the overall slice.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ContractError, DataError, DimensionError

PEAK_HOURS = frozenset(list(range(7, 11)) + list(range(16, 20)))
OFFPEAK_HOURS = frozenset(list(range(0, 7)) + list(range(20, 24)))
MAPE_EPSILON_MW = 1e-6


@dataclass(frozen=True)
class MetricReport:
    slice_label: str
    mae: float
    rmse: float
    mape: float
    n: int
    mape_excluded: int = 0

    def __post_init__(self):
        if self.n <= 0:
            raise ContractError("a metric report needs at least one row")
        if self.mae > self.rmse + 1e-9 * max(1.0, self.rmse):
            raise ContractError(
                f"mae {self.mae} exceeds rmse {self.rmse}; metrics are inconsistent")

    def to_dict(self) -> dict:
        return {"slice": self.slice_label, "mae": self.mae, "rmse": self.rmse,
                "mape": self.mape, "n": self.n, "mape_excluded": self.mape_excluded}


def mae(y: np.ndarray, y_hat: np.ndarray) -> float:
    _check_lengths(y, y_hat)
    return float(np.mean(np.abs(y_hat - y)))


def rmse(y: np.ndarray, y_hat: np.ndarray) -> float:
    _check_lengths(y, y_hat)
    return float(np.sqrt(np.mean((y_hat - y) ** 2)))


def mape(y: np.ndarray, y_hat: np.ndarray) -> tuple[float, int]:
    """Percentage error over rows with |y| above a tiny MW threshold.

    Returns (value, number of excluded rows); all rows excluded is an error.
    """
    _check_lengths(y, y_hat)
    keep = np.abs(y) > MAPE_EPSILON_MW
    excluded = int(len(y) - keep.sum())
    if not keep.any():
        raise DataError("mape undefined: every actual value is ~0 MW")
    value = float(100.0 * np.mean(np.abs((y_hat[keep] - y[keep]) / y[keep])))
    return value, excluded


def _check_lengths(y, y_hat):
    if len(y) != len(y_hat):
        raise DimensionError(f"metric inputs differ in length: {len(y)} vs {len(y_hat)}")
    if len(y) == 0:
        raise ContractError("metrics need at least one row")


def metric_report(slice_label: str, y: np.ndarray, y_hat: np.ndarray) -> MetricReport:
    mape_value, excluded = mape(y, y_hat)
    return MetricReport(slice_label=slice_label, mae=mae(y, y_hat),
                        rmse=rmse(y, y_hat), mape=mape_value, n=len(y),
                        mape_excluded=excluded)


# --------------------------------------------------------------------------
# Peak / off-peak slicing and the hourly mean curve
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveExport:
    """Mean actual and predicted MW per hour of day; always 24 rows."""

    mean_actual: np.ndarray
    mean_predicted: np.ndarray

    def __post_init__(self):
        if len(self.mean_actual) != 24 or len(self.mean_predicted) != 24:
            raise ContractError("hourly curve must have exactly 24 rows")

    def rows(self) -> list[tuple[int, float, float]]:
        return [(h, float(self.mean_actual[h]), float(self.mean_predicted[h]))
                for h in range(24)]


def peak_offpeak_report(predictions: pd.DataFrame) -> tuple[list[MetricReport], CurveExport]:
    """Overall / peak / off-peak metric slices plus the 24-hour mean curve.

    ``predictions`` carries one row per forecast: columns ``timestamp``,
    ``actual_mw``, ``predicted_mw``.  A bucket with no rows is simply absent.
    """
    for col in ("timestamp", "actual_mw", "predicted_mw"):
        if col not in predictions.columns:
            raise DataError(f"predictions table missing column {col}")
    hours = pd.to_datetime(predictions["timestamp"]).dt.hour.to_numpy()
    y = predictions["actual_mw"].to_numpy(dtype=np.float64)
    y_hat = predictions["predicted_mw"].to_numpy(dtype=np.float64)

    reports = [metric_report("overall", y, y_hat)]
    peak_mask = np.isin(hours, list(PEAK_HOURS))
    off_mask = np.isin(hours, list(OFFPEAK_HOURS))
    if peak_mask.any():
        reports.append(metric_report("peak", y[peak_mask], y_hat[peak_mask]))
    if off_mask.any():
        reports.append(metric_report("off-peak", y[off_mask], y_hat[off_mask]))

    mean_actual = np.full(24, np.nan)
    mean_predicted = np.full(24, np.nan)
    for h in range(24):
        mask = hours == h
        if mask.any():
            mean_actual[h] = y[mask].mean()
            mean_predicted[h] = y_hat[mask].mean()
    return reports, CurveExport(mean_actual=mean_actual, mean_predicted=mean_predicted)


def predictions_frame(model, data) -> pd.DataFrame:
    """Eval-mode forecasts for every window of a SequenceDataset, in MW.

    One row per (state, forecast hour): timestamp, actual_mw, predicted_mw.
    """
    from .pipeline import LOAD_COLUMN

    records = []
    for batch in data.batches():
        scaled = model.predict_batch(batch)
        predicted = model.scaler.inverse_column(LOAD_COLUMN, scaled)
        actual = model.scaler.inverse_column(LOAD_COLUMN, batch.y.data)
        ts = str(batch.target_time)
        for si, state_name in enumerate(data.states):
            records.append((state_name, ts, float(actual[si]), float(predicted[si])))
    return pd.DataFrame(records, columns=["state", "timestamp", "actual_mw",
                                          "predicted_mw"])


# --------------------------------------------------------------------------
# Cross-model comparison
# --------------------------------------------------------------------------

def compare_models(entries: list[tuple[str, MetricReport]]) -> list[dict]:
    """Rank by MAE and report the best model's relative improvement.

    improvement = 100 * (other - best) / other, per metric; the best row
    shows 0 against itself.
    """
    if len(entries) < 2:
        raise ContractError("compare_models needs at least two models")
    ranked = sorted(entries, key=lambda item: item[1].mae)
    best = ranked[0][1]
    table = []
    for name, rep in ranked:
        def imp(other, best_value):
            return 0.0 if other == 0 else 100.0 * (other - best_value) / other

        table.append({
            "model": name,
            "mae": rep.mae, "rmse": rep.rmse, "mape": rep.mape, "n": rep.n,
            "mae_improvement_pct": imp(rep.mae, best.mae),
            "rmse_improvement_pct": imp(rep.rmse, best.rmse),
            "mape_improvement_pct": imp(rep.mape, best.mape),
        })
    return table


# --------------------------------------------------------------------------
# Report files
# --------------------------------------------------------------------------

def save_report(out_dir: str | Path, model_name: str, reports: list[MetricReport],
                curve: CurveExport) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"model": model_name, "slices": [r.to_dict() for r in reports]}
    (out_dir / "report.json").write_text(json.dumps(summary, indent=1))
    with open(out_dir / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "slice", "mae", "rmse", "mape", "n", "mape_excluded"])
        for r in reports:
            writer.writerow([model_name, r.slice_label, repr(r.mae), repr(r.rmse),
                             repr(r.mape), r.n, r.mape_excluded])
    with open(out_dir / "hourly_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", "mean_actual_mw", "mean_predicted_mw"])
        for h, actual, predicted in curve.rows():
            writer.writerow([h, repr(actual), repr(predicted)])


def load_report(path: str | Path) -> tuple[str, MetricReport]:
    """Read a report.json and return its model name and overall slice."""
    payload = json.loads(Path(path).read_text())
    overall = next((s for s in payload["slices"] if s["slice"] == "overall"), None)
    if overall is None:
        raise DataError(f"{path}: no overall slice in report")
    rep = MetricReport(slice_label="overall", mae=overall["mae"], rmse=overall["rmse"],
                       mape=overall["mape"], n=overall["n"],
                       mape_excluded=overall.get("mape_excluded", 0))
    return payload["model"], rep


def save_comparison(path: str | Path, table: list[dict]) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(table, indent=1))
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(table[0].keys()))
        writer.writeheader()
        writer.writerows(table)
