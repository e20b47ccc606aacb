"""Synthetic grid dataset generator for desk-scale end-to-end runs.

Produces a random connected transmission grid with plausible physical
attributes, plus two years of hourly per-state series: load with per-node
daily/weekly rhythms, persistent AR(1) fluctuations, and a tunable spatial
coupling term that mixes each node's deviations with its neighbors'; PV and
wind generation derived from node potentials; station-level weather readings
correlated with load; and slowly-varying annual socio-economic values.

The coupling knob is the only cross-node channel: with it at zero (and flat
seasonal amplitudes) loads are independent, and raising it makes neighbor
series measurably more correlated than non-neighbor ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError
from .graph import EdgeRecord, NodeRecord, PowerGraph, build_graph, save_graph
from .seeding import substream

WEATHER_VARIABLES = ["air_temperature", "atmospheric_pressure", "rainfall"]
SEQUENCE_COLUMNS = ["state", "timestamp", "pv_gen_mw", "onshore_wind_gen_mw",
                    "offshore_wind_gen_mw", "gdp", "population", "load_mw"]


@dataclass
class SynthConfig:
    nodes: int = 27
    lines: int = 38
    days: int = 730
    start: str = "2019-01-01"
    base_load_min: float = 500.0
    base_load_max: float = 3000.0
    daily_amplitude: float = 0.25
    weekly_amplitude: float = 0.08
    coupling: float = 0.3
    noise_sigma: float = 0.12
    ar_coeff: float = 0.97
    missing_rate: float = 0.02

    def __post_init__(self):
        if self.nodes < 1:
            raise ConfigError("need at least one node")
        if self.lines < self.nodes - 1:
            raise ConfigError(
                f"{self.lines} lines cannot connect {self.nodes} nodes "
                f"(need at least {self.nodes - 1})")
        max_lines = self.nodes * (self.nodes - 1) // 2
        if self.lines > max_lines:
            raise ConfigError(f"{self.lines} lines exceed the {max_lines} possible pairs")
        if self.days < 2:
            raise ConfigError("need at least two days of data")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError("missing_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SyntheticDataset:
    graph: PowerGraph
    weather: pd.DataFrame
    sequence: pd.DataFrame


def _random_graph(cfg: SynthConfig, rng: np.random.Generator) -> PowerGraph:
    """Spanning tree plus random extra chords; always connected."""
    n = cfg.nodes
    names = [f"S{i + 1:02d}" for i in range(n)]
    nodes = []
    for name in names:
        offshore = float(rng.uniform(0.0, 150.0)) if rng.random() < 0.4 else 0.0
        nodes.append(NodeRecord(
            name=name,
            pv_potential=float(rng.uniform(50.0, 400.0)),
            onshore_wind_potential=float(rng.uniform(30.0, 300.0)),
            offshore_wind_potential=offshore,
            longitude=float(rng.uniform(-74.0, -34.0)),
            latitude=float(rng.uniform(-34.0, 5.0)),
        ))
    pairs: set[tuple[int, int]] = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        pairs.add((j, i))
    while len(pairs) < cfg.lines:
        a, b = rng.integers(0, n, size=2)
        if a == b:
            continue
        pair = (min(int(a), int(b)), max(int(a), int(b)))
        pairs.add(pair)
    edges = []
    for a, b in sorted(pairs):
        edges.append(EdgeRecord(
            source=names[a], target=names[b],
            capacity=float(rng.uniform(100.0, 2000.0)),
            efficiency=float(rng.uniform(0.9, 0.99)),
            length=float(rng.uniform(50.0, 1500.0)),
            carrier="AC" if rng.random() < 0.7 else "DC",
        ))
    return build_graph(nodes, edges)


def _ar1(rng: np.random.Generator, hours: int, n: int, rho: float) -> np.ndarray:
    """[n, hours] stationary AR(1) paths with unit marginal variance."""
    innov_scale = np.sqrt(1.0 - rho * rho)
    eps = rng.standard_normal((n, hours))
    out = np.empty((n, hours))
    out[:, 0] = eps[:, 0]
    for t in range(1, hours):
        out[:, t] = rho * out[:, t - 1] + innov_scale * eps[:, t]
    return out


def generate_synthetic(cfg: SynthConfig, seed: int) -> SyntheticDataset:
    rng = substream(seed, "synth")
    graph = _random_graph(cfg, rng)
    n = graph.n_nodes
    hours = cfg.days * 24
    timestamps = pd.date_range(cfg.start, periods=hours, freq="h")
    t = np.arange(hours)
    hour_of_day = timestamps.hour.to_numpy()

    base = rng.uniform(cfg.base_load_min, cfg.base_load_max, size=n)
    phase_daily = rng.uniform(0.0, 2 * np.pi, size=n)
    phase_weekly = rng.uniform(0.0, 2 * np.pi, size=n)

    daily = np.sin(2 * np.pi * t[None, :] / 24.0 + phase_daily[:, None])
    weekly = np.sin(2 * np.pi * t[None, :] / 168.0 + phase_weekly[:, None])
    seasonal = base[:, None] * (cfg.daily_amplitude * daily
                                + cfg.weekly_amplitude * weekly)
    noise = base[:, None] * cfg.noise_sigma * _ar1(rng, hours, n, cfg.ar_coeff)
    deviation = seasonal + noise

    neighbor_mean = np.zeros_like(deviation)
    adj: list[list[int]] = [[] for _ in range(n)]
    for s, d, _ in graph.directed_edges():
        adj[d].append(s)
    for i in range(n):
        if adj[i]:
            neighbor_mean[i] = deviation[adj[i]].mean(axis=0)
    load = base[:, None] + deviation + cfg.coupling * neighbor_mean
    load = np.maximum(load, 0.05 * base[:, None])

    # Generation profiles from node potentials
    pv_shape = np.maximum(0.0, np.sin(np.pi * (hour_of_day - 6.0) / 12.0))
    pv_pot = np.array([nd.pv_potential for nd in graph.nodes])
    on_pot = np.array([nd.onshore_wind_potential for nd in graph.nodes])
    off_pot = np.array([nd.offshore_wind_potential for nd in graph.nodes])
    # sensor noise leaves small negative readings at night on purpose
    pv = pv_pot[:, None] * pv_shape[None, :] + 0.02 * pv_pot[:, None] * rng.standard_normal((n, hours))
    wind_factor = np.clip(0.35 + 0.25 * weekly + 0.15 * rng.standard_normal((n, hours)), 0.0, 1.0)
    onshore = on_pot[:, None] * wind_factor
    offshore = off_pot[:, None] * np.clip(
        0.4 + 0.2 * weekly + 0.15 * rng.standard_normal((n, hours)), 0.0, 1.0)

    # Annual socio-economic values repeated across the year (step function)
    years = timestamps.year.to_numpy()
    year_values = np.unique(years)
    gdp_base = rng.uniform(5e4, 5e5, size=n)
    pop_base = rng.uniform(5e5, 2e7, size=n)
    gdp = np.empty((n, hours))
    pop = np.empty((n, hours))
    for yi, year in enumerate(year_values):
        mask = years == year
        gdp[:, mask] = (gdp_base * (1.03 ** yi))[:, None]
        pop[:, mask] = (pop_base * (1.01 ** yi))[:, None]

    names = graph.node_names()
    ts_str = timestamps.strftime("%Y-%m-%d %H:%M:%S")
    sequence = pd.DataFrame({
        "state": np.repeat(names, hours),
        "timestamp": np.tile(ts_str, n),
        "pv_gen_mw": pv.reshape(-1),
        "onshore_wind_gen_mw": onshore.reshape(-1),
        "offshore_wind_gen_mw": offshore.reshape(-1),
        "gdp": gdp.reshape(-1),
        "population": pop.reshape(-1),
        "load_mw": load.reshape(-1),
    })

    weather = _weather_records(cfg, rng, names, ts_str, daily, weekly, load, base)
    return SyntheticDataset(graph=graph, weather=weather, sequence=sequence)


def _weather_records(cfg, rng, names, ts_str, daily, weekly, load, base) -> pd.DataFrame:
    """Station-level hourly readings; the first state gets a single station."""
    n = len(names)
    hours = daily.shape[1]
    load_anomaly = (load - base[:, None]) / base[:, None]
    state_signals = {
        "air_temperature": 20.0 + 8.0 * daily + 5.0 * load_anomaly
        + 1.0 * rng.standard_normal((n, hours)),
        "atmospheric_pressure": 1013.0 + 5.0 * weekly + rng.standard_normal((n, hours)),
        "rainfall": np.maximum(0.0, rng.standard_normal((n, hours)) * 2.0 - 1.0),
    }
    station_counts = [1 if i == 0 else int(rng.integers(1, 3)) for i in range(n)]
    frames = []
    for i, state in enumerate(names):
        for s in range(station_counts[i]):
            station_id = f"{state}-W{s + 1}"
            for var in WEATHER_VARIABLES:
                values = state_signals[var][i] + 0.5 * rng.standard_normal(hours)
                frames.append(pd.DataFrame({
                    "station_id": station_id,
                    "state": state,
                    "timestamp": ts_str,
                    "variable": var,
                    "value": values,
                }))
    weather = pd.concat(frames, ignore_index=True)
    if cfg.missing_rate > 0:
        keep = rng.random(len(weather)) >= cfg.missing_rate
        weather = weather.loc[keep].reset_index(drop=True)
    return weather


# --------------------------------------------------------------------------
# Raw dataset directory I/O
# --------------------------------------------------------------------------

def save_raw_dataset(data: SyntheticDataset, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_graph(data.graph, out_dir / "nodes.csv", out_dir / "edges.csv")
    data.weather.to_csv(out_dir / "weather.csv", index=False, float_format="%.17g")
    data.sequence.to_csv(out_dir / "sequence.csv", index=False, float_format="%.17g")


def load_raw_dataset(raw_dir: str | Path):
    from .errors import DataError
    from .graph import load_graph

    raw_dir = Path(raw_dir)
    for name in ("nodes.csv", "edges.csv", "weather.csv", "sequence.csv"):
        if not (raw_dir / name).exists():
            raise DataError(f"raw dataset {raw_dir} is missing {name}")
    graph = load_graph(raw_dir / "nodes.csv", raw_dir / "edges.csv")
    weather = pd.read_csv(raw_dir / "weather.csv", float_precision="round_trip")
    sequence = pd.read_csv(raw_dir / "sequence.csv", float_precision="round_trip")
    return graph, weather, sequence
