"""Ingestion and preprocessing of raw grid time-series into model-ready splits.

The flow: consolidate station-level weather per state/hour, interpolate gaps,
clip negative PV readings, derive calendar features, split chronologically,
robust-scale with statistics fitted on the training split only, shift the
load to create next-hour targets, and assemble node-aligned sliding-window
batches. All stages are pure functions over pandas frames; determinism is
part of the contract.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import tensor as T
from .errors import ConfigError, DataError, SchemaError, StateError
from .tensor import Tensor

WEATHER_COLUMNS = ["station_id", "state", "timestamp", "variable", "value"]
SEQUENCE_KEY_COLUMNS = ["state", "timestamp"]
LOAD_COLUMN = "load_mw"
TARGET_COLUMN = "target"

# Fixed-date national holidays used for the calendar indicator.
HOLIDAYS = [(1, 1), (4, 21), (5, 1), (9, 7), (10, 12), (11, 2), (11, 15), (12, 25)]


# --------------------------------------------------------------------------
# Step 1: per-state weather consolidation
# --------------------------------------------------------------------------

def consolidate_weather(records: pd.DataFrame) -> pd.DataFrame:
    """Mean and sample std of each variable over a state's stations per hour.

    A single reporting station yields std 0 rather than a missing value.
    Returns a wide frame keyed by (state, timestamp) with columns
    ``{variable}_mean`` / ``{variable}_std``.
    """
    missing = [c for c in WEATHER_COLUMNS if c not in records.columns]
    if missing:
        raise SchemaError(f"weather records: missing column(s) {', '.join(missing)}")
    grouped = records.groupby(["state", "timestamp", "variable"])["value"].agg(
        ["mean", "std"])
    grouped["std"] = grouped["std"].fillna(0.0)
    wide = grouped.unstack("variable")
    wide.columns = [f"{var}_{stat}" for stat, var in wide.columns]
    return wide.sort_index(axis=1).reset_index()


# --------------------------------------------------------------------------
# Step 2: interpolation of missing values
# --------------------------------------------------------------------------

def interpolate_missing(frame: pd.DataFrame, columns: list[str],
                        state_column: str = "state") -> pd.DataFrame:
    """Fill gaps per state and column: linear inside, nearest value at the ends.

    Rows must already be one per (state, timestamp) at an hourly cadence.
    A column with no observations at all for some state is unrecoverable.
    """
    frame = frame.copy()
    for state, idx in frame.groupby(state_column).groups.items():
        block = frame.loc[idx, columns]
        all_missing = [c for c in columns if block[c].isna().all()]
        if all_missing:
            raise DataError(
                f"state {state}: column(s) {', '.join(all_missing)} have no observations")
        filled = block.interpolate(method="linear", limit_area="inside")
        filled = filled.ffill().bfill()
        frame.loc[idx, columns] = filled
    return frame


# --------------------------------------------------------------------------
# Step 4: negative PV correction
# --------------------------------------------------------------------------

def clip_negative_pv(frame: pd.DataFrame, pv_columns: list[str]) -> pd.DataFrame:
    frame = frame.copy()
    for col in pv_columns:
        frame[col] = frame[col].clip(lower=0.0)
    return frame


# --------------------------------------------------------------------------
# Step 5: robust scaling
# --------------------------------------------------------------------------

@dataclass
class ScalerStats:
    """Per-column median and interquartile range fitted on training rows.

    Quartiles use linear interpolation between order statistics.  A column
    with zero IQR is only centered (the divisor falls back to 1).
    """

    median: dict[str, float] = field(default_factory=dict)
    iqr: dict[str, float] = field(default_factory=dict)
    fitted: bool = False

    @property
    def columns(self) -> list[str]:
        return list(self.median)

    def zero_iqr_columns(self) -> list[str]:
        return [c for c, v in self.iqr.items() if v == 0.0]

    def fit(self, frame: pd.DataFrame, columns: list[str]) -> "ScalerStats":
        for col in columns:
            values = frame[col].to_numpy(dtype=np.float64)
            self.median[col] = float(np.median(values))
            q1, q3 = np.percentile(values, [25.0, 75.0])
            self.iqr[col] = float(q3 - q1)
        self.fitted = True
        return self

    def _check(self):
        if not self.fitted:
            raise StateError("scaler used before fit")

    def transform(self, frame: pd.DataFrame) -> pd.DataFrame:
        self._check()
        out = frame.copy()
        for col in self.columns:
            out[col] = self.transform_column(col, out[col].to_numpy(dtype=np.float64))
        return out

    def transform_column(self, col: str, values: np.ndarray) -> np.ndarray:
        self._check()
        scale = self.iqr[col] if self.iqr[col] != 0.0 else 1.0
        return (values - self.median[col]) / scale

    def inverse_column(self, col: str, values: np.ndarray) -> np.ndarray:
        self._check()
        scale = self.iqr[col] if self.iqr[col] != 0.0 else 1.0
        return values * scale + self.median[col]

    def to_dict(self) -> dict:
        self._check()
        return {c: {"median": self.median[c], "iqr": self.iqr[c]} for c in self.columns}

    @classmethod
    def from_dict(cls, data: dict) -> "ScalerStats":
        stats = cls()
        for col, entry in data.items():
            stats.median[col] = float(entry["median"])
            stats.iqr[col] = float(entry["iqr"])
        stats.fitted = True
        return stats


def robust_fit_transform(train: pd.DataFrame, columns: list[str]) -> tuple[ScalerStats, pd.DataFrame]:
    stats = ScalerStats().fit(train, columns)
    return stats, stats.transform(train)


# --------------------------------------------------------------------------
# Step 6: chronological split
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Half-open [start, end) timestamp intervals; a boundary belongs to the
    later interval."""

    train: tuple[pd.Timestamp, pd.Timestamp]
    validation: tuple[pd.Timestamp, pd.Timestamp]
    test: tuple[pd.Timestamp, pd.Timestamp]

    def __post_init__(self):
        order = [*self.train, *self.validation, *self.test]
        for a, b in zip(order, order[1:]):
            if a > b:
                raise ConfigError("split intervals must be disjoint and ordered "
                                  "train < validation < test")

    def intervals(self) -> dict[str, tuple[pd.Timestamp, pd.Timestamp]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}

    def to_dict(self) -> dict:
        return {name: [str(lo), str(hi)] for name, (lo, hi) in self.intervals().items()}

    @classmethod
    def from_dict(cls, data: dict) -> "SplitSpec":
        def pair(name):
            lo, hi = data[name]
            return (pd.Timestamp(lo), pd.Timestamp(hi))

        return cls(train=pair("train"), validation=pair("validation"), test=pair("test"))

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """Parse ``train=LO:HI,validation=LO:HI,test=LO:HI`` (dates, half-open)."""
        parts = {}
        for chunk in text.split(","):
            if "=" not in chunk:
                raise ConfigError(f"bad split chunk {chunk!r}")
            name, span = chunk.split("=", 1)
            if ":" not in span:
                raise ConfigError(f"bad split interval {span!r}, expected LO:HI")
            lo, hi = span.split(":", 1)
            parts[name.strip()] = [lo.strip(), hi.strip()]
        missing = {"train", "validation", "test"} - set(parts)
        if missing:
            raise ConfigError(f"split spec missing {', '.join(sorted(missing))}")
        return cls.from_dict(parts)


def chronological_split(frame: pd.DataFrame, spec: SplitSpec) -> dict[str, pd.DataFrame]:
    """Row-disjoint splits by timestamp; no shuffling."""
    ts = pd.to_datetime(frame["timestamp"])
    out = {}
    for name, (lo, hi) in spec.intervals().items():
        mask = (ts >= lo) & (ts < hi)
        out[name] = frame.loc[mask].reset_index(drop=True)
    return out


# --------------------------------------------------------------------------
# Step 7: next-hour target creation
# --------------------------------------------------------------------------

def make_targets(frame: pd.DataFrame, load_column: str = LOAD_COLUMN) -> pd.DataFrame:
    """target(t) = load(t+1) per state; the final row of each state is dropped."""
    frame = frame.sort_values(["state", "timestamp"]).reset_index(drop=True)
    frame[TARGET_COLUMN] = frame.groupby("state")[load_column].shift(-1)
    return frame.dropna(subset=[TARGET_COLUMN]).reset_index(drop=True)


# --------------------------------------------------------------------------
# Calendar features
# --------------------------------------------------------------------------

def calendar_columns() -> list[str]:
    return ["hour_sin", "hour_cos", "dow_sin", "dow_cos", "month_sin", "month_cos",
            "holiday", "season_q1", "season_q2", "season_q3", "season_q4"]


def add_calendar_features(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    ts = pd.to_datetime(frame["timestamp"])
    hour = ts.dt.hour.to_numpy()
    dow = ts.dt.dayofweek.to_numpy()
    month = ts.dt.month.to_numpy()
    frame["hour_sin"] = np.sin(2 * np.pi * hour / 24.0)
    frame["hour_cos"] = np.cos(2 * np.pi * hour / 24.0)
    frame["dow_sin"] = np.sin(2 * np.pi * dow / 7.0)
    frame["dow_cos"] = np.cos(2 * np.pi * dow / 7.0)
    frame["month_sin"] = np.sin(2 * np.pi * (month - 1) / 12.0)
    frame["month_cos"] = np.cos(2 * np.pi * (month - 1) / 12.0)
    md = list(zip(month.tolist(), ts.dt.day.tolist()))
    frame["holiday"] = np.array([1.0 if pair in HOLIDAYS else 0.0 for pair in md])
    season = (month % 12) // 3  # DJF, MAM, JJA, SON
    for q in range(4):
        frame[f"season_q{q + 1}"] = (season == q).astype(np.float64)
    return frame


# --------------------------------------------------------------------------
# Panel assembly and full pipeline
# --------------------------------------------------------------------------

@dataclass
class PanelDataset:
    """One row per (state, timestamp) with scaled features and a scaled target."""

    frame: pd.DataFrame
    feature_columns: list[str]
    states: list[str]

    def __post_init__(self):
        by_state = self.frame.groupby("state")
        for state, block in by_state:
            ts = pd.to_datetime(block["timestamp"])
            if not ts.is_monotonic_increasing or ts.duplicated().any():
                raise DataError(f"state {state}: timestamps not strictly increasing")
        if self.frame[self.feature_columns + [TARGET_COLUMN]].isna().any().any():
            raise DataError("panel contains missing values after preprocessing")

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    def per_state_arrays(self) -> tuple[np.ndarray, np.ndarray, pd.DatetimeIndex]:
        """Stack features/targets as [n_states, n_hours, d] aligned across states."""
        frames = {state: block.reset_index(drop=True)
                  for state, block in self.frame.groupby("state")}
        base_ts = pd.DatetimeIndex(pd.to_datetime(frames[self.states[0]]["timestamp"]))
        feats, targets = [], []
        for state in self.states:
            block = frames.get(state)
            if block is None or len(block) != len(base_ts):
                raise DataError(f"state {state}: rows not aligned across states")
            if not (pd.DatetimeIndex(pd.to_datetime(block["timestamp"])) == base_ts).all():
                raise DataError(f"state {state}: timestamps differ from other states")
            feats.append(block[self.feature_columns].to_numpy(dtype=np.float64))
            targets.append(block[TARGET_COLUMN].to_numpy(dtype=np.float64))
        return np.stack(feats), np.stack(targets), base_ts


@dataclass
class Batch:
    """All nodes at one window position: X is [B, T, d_s], y is [B]."""

    node_ids: np.ndarray
    x: Tensor
    y: Tensor
    target_time: pd.Timestamp | None = None


class SequenceDataset:
    """Node-aligned sliding windows over a panel split.

    Window w covers hours [w, w + T); its target is the panel target at the
    window's final row, i.e. the load one hour past the window end.  Batches
    group the same window position across every state.
    """

    def __init__(self, panel: PanelDataset, seq_len: int):
        if seq_len < 1:
            raise ConfigError(f"sequence length must be >= 1, got {seq_len}")
        self.seq_len = seq_len
        self.states = panel.states
        self.features, self.targets, self.timestamps = panel.per_state_arrays()
        n_hours = self.features.shape[1]
        self.n_windows = max(n_hours - seq_len + 1, 0)
        if self.n_windows == 0:
            warnings.warn(
                f"split has {n_hours} hourly rows, shorter than window length "
                f"{seq_len}; it contributes no batches")
        self.node_ids = np.arange(len(self.states), dtype=np.intp)

    def __len__(self) -> int:
        return self.n_windows

    def batch(self, w: int) -> Batch:
        end = w + self.seq_len
        x = self.features[:, w:end, :]
        y = self.targets[:, end - 1]
        # target time = one hour past the final window row
        target_time = self.timestamps[end - 1] + pd.Timedelta(hours=1)
        return Batch(node_ids=self.node_ids, x=T.tensor(x), y=T.tensor(y),
                     target_time=target_time)

    def batches(self, order: np.ndarray | None = None):
        idx = range(self.n_windows) if order is None else order
        for w in idx:
            yield self.batch(int(w))


@dataclass
class ProcessedDataset:
    splits: dict[str, PanelDataset]
    scaler: ScalerStats
    feature_columns: list[str]
    states: list[str]
    split_spec: SplitSpec
    source_seed: int | None = None


def run_pipeline(weather: pd.DataFrame, sequence: pd.DataFrame,
                 split_spec: SplitSpec) -> ProcessedDataset:
    """Execute the preprocessing steps in order on raw input frames."""
    for col in SEQUENCE_KEY_COLUMNS + [LOAD_COLUMN]:
        if col not in sequence.columns:
            raise SchemaError(f"sequence table: missing column {col}")
    wide_weather = consolidate_weather(weather)
    panel = sequence.merge(wide_weather, on=["state", "timestamp"], how="left")
    panel["timestamp"] = pd.to_datetime(panel["timestamp"])
    panel = panel.sort_values(["state", "timestamp"]).reset_index(drop=True)

    states = sorted(panel["state"].unique())
    weather_cols = [c for c in wide_weather.columns if c not in ("state", "timestamp")]
    dynamic_cols = [c for c in sequence.columns if c not in SEQUENCE_KEY_COLUMNS]
    value_cols = weather_cols + dynamic_cols

    panel = interpolate_missing(panel, value_cols)
    pv_cols = [c for c in dynamic_cols if c.startswith("pv_")]
    panel = clip_negative_pv(panel, pv_cols)
    panel = add_calendar_features(panel)

    feature_columns = sorted(value_cols) + calendar_columns()
    splits = chronological_split(panel, split_spec)
    if splits["train"].empty:
        raise DataError("training split is empty for the given boundaries")
    scaler = ScalerStats().fit(splits["train"], feature_columns)

    panels = {}
    for name, frame in splits.items():
        scaled = scaler.transform(frame)
        targeted = make_targets(scaled)
        panels[name] = PanelDataset(frame=targeted, feature_columns=feature_columns,
                                    states=states)
    return ProcessedDataset(splits=panels, scaler=scaler,
                            feature_columns=feature_columns, states=states,
                            split_spec=split_spec)


# --------------------------------------------------------------------------
# Processed dataset directory I/O
# --------------------------------------------------------------------------

PIPELINE_VERSION = "gridcast.pipeline.v1"


def save_processed(dataset: ProcessedDataset, out_dir: str | Path) -> None:
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, panel in dataset.splits.items():
        cols = ["state", "timestamp"] + dataset.feature_columns + [TARGET_COLUMN]
        frame = panel.frame[cols].copy()
        frame["timestamp"] = frame["timestamp"].astype(str)
        # %.17g keeps every float64 bit-exact through the text round trip
        frame.to_csv(out_dir / f"{name}.csv", index=False, float_format="%.17g")
    manifest = {
        "pipeline_version": PIPELINE_VERSION,
        "feature_columns": dataset.feature_columns,
        "states": dataset.states,
        "splits": dataset.split_spec.to_dict(),
        "source_seed": dataset.source_seed,
    }
    (out_dir / "scaler.json").write_text(json.dumps(dataset.scaler.to_dict(), indent=1))
    (out_dir / "dataset.json").write_text(json.dumps(manifest, indent=1))


def load_processed(data_dir: str | Path) -> ProcessedDataset:
    import json

    data_dir = Path(data_dir)
    manifest_path = data_dir / "dataset.json"
    if not manifest_path.exists():
        raise DataError(f"{data_dir} is not a processed dataset (no dataset.json)")
    manifest = json.loads(manifest_path.read_text())
    scaler = ScalerStats.from_dict(json.loads((data_dir / "scaler.json").read_text()))
    feature_columns = manifest["feature_columns"]
    states = manifest["states"]
    splits = {}
    for name in ("train", "validation", "test"):
        frame = pd.read_csv(data_dir / f"{name}.csv", float_precision="round_trip")
        frame["timestamp"] = pd.to_datetime(frame["timestamp"])
        splits[name] = PanelDataset(frame=frame, feature_columns=feature_columns,
                                    states=states)
    return ProcessedDataset(splits=splits, scaler=scaler,
                            feature_columns=feature_columns, states=states,
                            split_spec=SplitSpec.from_dict(manifest["splits"]),
                            source_seed=manifest.get("source_seed"))
