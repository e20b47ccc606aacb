"""The forecaster: spatial towers, early fusion, recurrence, scalar head.

Four variants share one interface.  The graph-aware variants compute node
embeddings once per batch over the full node set, index them for the batch's
nodes, repeat them along the window, and concatenate them feature-wise onto
every timestep before the LSTM ("early fusion").  The plain sequence variant
skips the spatial phase entirely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import layers as L
from . import tensor as T
from .errors import CompatibilityError, ConfigError, DataError
from .graph import NeighborhoodIndex, PowerGraph, build_neighborhoods, encode_edge_attrs, \
    normalized_adjacency
from .pipeline import Batch, ScalerStats, LOAD_COLUMN
from .tensor import Tensor

VARIANTS = ("gat-lstm", "gcn-lstm", "edgegcn-lstm", "lstm")
CHECKPOINT_FORMAT = "gridcast.checkpoint.v1"


@dataclass
class ModelConfig:
    variant: str
    seq_len: int
    d_s: int
    gat_out: int = 64
    heads: int = 8
    lstm_hidden: int = 128
    lstm_layers: int = 4
    gat_dropout: float = 0.2
    lstm_dropout: float = 0.3
    d_g: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.seq_len < 1:
            raise ConfigError("seq_len must be >= 1")
        expected = 0 if self.variant == "lstm" else 2 * self.gat_out
        if self.d_g is None:
            self.d_g = expected
        elif self.d_g != expected:
            raise ConfigError(
                f"d_g={self.d_g} inconsistent with variant {self.variant} "
                f"(expected {expected})")
        if self.variant == "gat-lstm" and self.gat_out % self.heads != 0:
            raise ConfigError(
                f"gat_out={self.gat_out} not divisible by heads={self.heads}")

    @property
    def fused_width(self) -> int:
        return self.d_s + self.d_g

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "variant", "seq_len", "d_s", "gat_out", "heads", "lstm_hidden",
            "lstm_layers", "gat_dropout", "lstm_dropout", "d_g")}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass
class GraphInputs:
    """Constant per-graph tensors shared by every forward pass."""

    h: Tensor
    nbr: NeighborhoodIndex
    edge_attrs: Tensor
    a_hat: Tensor
    node_names: list[str]

    @property
    def d_node(self) -> int:
        return self.h.shape[1]

    @property
    def d_edge(self) -> int:
        return self.edge_attrs.shape[1]


def build_graph_inputs(graph: PowerGraph) -> GraphInputs:
    """Standardize static node features and precompute derived structures.

    Node columns (potentials, coordinates) are brought to mean 0 / std 1
    over the node set, mirroring the edge-attribute encoding; a constant
    column encodes to zeros.
    """
    feats = graph.node_feature_matrix()
    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    feats = (feats - mean) / np.where(std > 0, std, 1.0)
    feats[:, std == 0] = 0.0
    return GraphInputs(
        h=T.tensor(feats),
        nbr=build_neighborhoods(graph),
        edge_attrs=T.tensor(encode_edge_attrs(graph)),
        a_hat=T.tensor(normalized_adjacency(graph)),
        node_names=graph.node_names(),
    )


@dataclass
class ModelParams:
    variant: str
    lstm: L.LstmParams
    head_w: Tensor
    head_b: Tensor
    gat1: L.EdgeGatParams | None = None
    gat2: L.EdgeGatParams | None = None
    gcn1: L.GcnParams | None = None
    gcn2: L.GcnParams | None = None

    def named(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for prefix, tower in (("gat1", self.gat1), ("gat2", self.gat2),
                              ("gcn1", self.gcn1), ("gcn2", self.gcn2)):
            if tower is not None:
                out.extend(tower.named(prefix))
        out.extend(self.lstm.named("lstm"))
        out.append(("head.w", self.head_w))
        out.append(("head.b", self.head_b))
        return out

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]

    def copy(self) -> "ModelParams":
        return _clone(self)


def init_params(config: ModelConfig, d_node: int, d_edge: int,
                rng: np.random.Generator) -> ModelParams:
    """Draw all parameters in a fixed order from one generator."""
    gat1 = gat2 = gcn1 = gcn2 = None
    if config.variant == "gat-lstm":
        gat1 = L.init_edge_gat(rng, d_node, d_edge, config.heads, config.gat_out,
                               dropout_rate=config.gat_dropout)
        gat2 = L.init_edge_gat(rng, d_node, d_edge, config.heads, config.gat_out,
                               dropout_rate=config.gat_dropout)
    elif config.variant == "gcn-lstm":
        gcn1 = L.init_gcn(rng, d_node, config.gat_out)
        gcn2 = L.init_gcn(rng, d_node, config.gat_out)
    elif config.variant == "edgegcn-lstm":
        gcn1 = L.init_gcn(rng, d_node, config.gat_out, d_e=d_edge)
        gcn2 = L.init_gcn(rng, d_node, config.gat_out, d_e=d_edge)
    lstm = L.init_lstm(rng, config.fused_width, config.lstm_hidden,
                       config.lstm_layers, dropout_rate=config.lstm_dropout)
    head_w, head_b = L.init_linear(rng, config.lstm_hidden, 1)
    return ModelParams(variant=config.variant, lstm=lstm, head_w=head_w,
                       head_b=head_b, gat1=gat1, gat2=gat2, gcn1=gcn1, gcn2=gcn2)


def _clone(params: ModelParams) -> ModelParams:
    """Deep copy into fresh parameter tensors (used for best-epoch snapshots)."""

    def clone_gat(p):
        if p is None:
            return None
        return L.EdgeGatParams(w=[T.parameter(t.data.copy()) for t in p.w],
                               u=[T.parameter(t.data.copy()) for t in p.u],
                               a=[T.parameter(t.data.copy()) for t in p.a],
                               leaky_slope=p.leaky_slope, dropout_rate=p.dropout_rate)

    def clone_gcn(p):
        if p is None:
            return None
        return L.GcnParams(w=T.parameter(p.w.data.copy()),
                           v=None if p.v is None else T.parameter(p.v.data.copy()))

    lstm = L.LstmParams(
        layers=[L.LstmLayerParams(**{name: T.parameter(getattr(layer, name).data.copy())
                                     for name in ("w_i", "w_f", "w_g", "w_o",
                                                  "u_i", "u_f", "u_g", "u_o",
                                                  "b_i", "b_f", "b_g", "b_o")})
                for layer in params.lstm.layers],
        dropout_rate=params.lstm.dropout_rate)
    return ModelParams(variant=params.variant, lstm=lstm,
                       head_w=T.parameter(params.head_w.data.copy()),
                       head_b=T.parameter(params.head_b.data.copy()),
                       gat1=clone_gat(params.gat1), gat2=clone_gat(params.gat2),
                       gcn1=clone_gcn(params.gcn1), gcn2=clone_gcn(params.gcn2))


# --------------------------------------------------------------------------
# Forward pass
# --------------------------------------------------------------------------

def fuse(embeddings: Tensor | None, batch: Batch) -> Tensor:
    """Repeat each node's embedding across the window and concatenate.

    Z_i[t] = [x_i^t | h'_i] for every t; with no embeddings the sequences
    pass through untouched.
    """
    if embeddings is None or embeddings.shape[1] == 0:
        return batch.x
    rows = T.gather_rows(embeddings, batch.node_ids)
    repeated = T.repeat_time(rows, batch.x.shape[1])
    return T.concat([batch.x, repeated], axis=2)


def node_embeddings(config: ModelConfig, params: ModelParams, gin: GraphInputs,
                    training: bool = False,
                    rng: np.random.Generator | None = None) -> Tensor | None:
    """Phase-1 spatial embeddings for the full node set, or None for plain LSTM."""
    if config.variant == "lstm":
        return None
    if config.variant == "gat-lstm":
        return L.two_tower_gat(gin.h, gin.nbr, gin.edge_attrs,
                               params.gat1, params.gat2, training, rng)
    if config.variant == "gcn-lstm":
        towers = [L.gcn_forward(gin.h, gin.a_hat, p) for p in (params.gcn1, params.gcn2)]
    else:  # edgegcn-lstm
        towers = [L.edge_gcn_forward(gin.h, gin.nbr, gin.edge_attrs, p)
                  for p in (params.gcn1, params.gcn2)]
    towers = [T.dropout(t, config.gat_dropout, training, rng) for t in towers]
    return T.concat(towers, axis=1)


def forward(config: ModelConfig, params: ModelParams, gin: GraphInputs, batch: Batch,
            training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Full forward pass; returns the next-hour forecast per batch row, [B].

    The fused input is assembled step-by-step ([x_i^t | h'_i] per t, the same
    rows ``fuse`` produces) so the constant sequence block never drags a
    full-window gradient buffer through the backward pass.
    """
    if params.variant != config.variant:
        raise ConfigError(
            f"params built for {params.variant!r} cannot run variant {config.variant!r}")
    if batch.x.shape[2] != config.d_s:
        raise ConfigError(
            f"batch feature width {batch.x.shape[2]} != configured d_s {config.d_s}")
    embeddings = node_embeddings(config, params, gin, training, rng)
    steps = [T.time_slice(batch.x, t) for t in range(batch.x.shape[1])]
    if embeddings is not None and embeddings.shape[1] > 0:
        rows = T.gather_rows(embeddings, batch.node_ids)
        steps = [T.concat([x_t, rows], axis=1) for x_t in steps]
    hidden = L.lstm_forward(steps, params.lstm, training, rng)
    out = L.linear_forward(hidden, params.head_w, params.head_b)
    return T.reshape(out, (out.shape[0],))


# --------------------------------------------------------------------------
# Bundled model: config + params + graph + scaler
# --------------------------------------------------------------------------

@dataclass
class Forecaster:
    config: ModelConfig
    params: ModelParams
    graph_inputs: GraphInputs
    scaler: ScalerStats
    feature_columns: list[str]
    seed: int

    def predict_batch(self, batch: Batch) -> np.ndarray:
        """Eval-mode forward returning scaled-space predictions."""
        with T.no_grad():
            return forward(self.config, self.params, self.graph_inputs, batch).data.copy()

    def predict_next_hour(self, window: np.ndarray, node_ids: np.ndarray) -> np.ndarray:
        """Forecast MW for the hour following a [B, T, d_s] scaled window."""
        if window.ndim != 3 or window.shape[1] != self.config.seq_len:
            raise DataError(
                f"window must be [B, {self.config.seq_len}, {self.config.d_s}], "
                f"got {list(window.shape)}")
        batch = Batch(node_ids=np.asarray(node_ids, dtype=np.intp),
                      x=T.tensor(window), y=T.tensor(np.zeros(window.shape[0])))
        scaled = self.predict_batch(batch)
        return self.scaler.inverse_column(LOAD_COLUMN, scaled)


def latest_window(panel_frame, feature_columns: list[str], states: list[str],
                  seq_len: int, at) -> np.ndarray:
    """Extract the [n_states, T, d] window ending at timestamp ``at``.

    Every state must have all T hourly rows; gaps are reported explicitly.
    """
    import pandas as pd

    at = pd.Timestamp(at)
    want = pd.date_range(end=at, periods=seq_len, freq="h")
    blocks = []
    for state in states:
        rows = panel_frame[panel_frame["state"] == state].set_index("timestamp")
        missing = [str(ts) for ts in want if ts not in rows.index]
        if missing:
            raise DataError(
                f"state {state}: window ending {at} is incomplete, missing "
                f"{', '.join(missing)}")
        blocks.append(rows.loc[want, feature_columns].to_numpy(dtype=np.float64))
    return np.stack(blocks)


# --------------------------------------------------------------------------
# Checkpoint I/O: one self-describing JSON container
# --------------------------------------------------------------------------

def save_checkpoint(path: str | Path, model: Forecaster) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "seed": model.seed,
        "node_names": model.graph_inputs.node_names,
        "feature_columns": model.feature_columns,
        "scaler": model.scaler.to_dict(),
        "params": {name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
                   for name, t in model.params.named()},
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path: str | Path, graph: PowerGraph) -> Forecaster:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a checkpoint (format tag "
                        f"{payload.get('format')!r})")
    gin = build_graph_inputs(graph)
    if payload["node_names"] != gin.node_names:
        raise CompatibilityError(
            "checkpoint node set does not match the provided graph")
    config = ModelConfig.from_dict(payload["config"])
    params = init_params(config, gin.d_node, gin.d_edge, np.random.default_rng(0))
    stored = payload["params"]
    for name, t in params.named():
        if name not in stored:
            raise DataError(f"checkpoint missing parameter {name}")
        entry = stored[name]
        if list(t.shape) != entry["shape"]:
            raise CompatibilityError(
                f"parameter {name}: stored shape {entry['shape']} != expected {list(t.shape)}")
        t.data[...] = np.asarray(entry["data"], dtype=np.float64).reshape(t.shape)
    return Forecaster(config=config, params=params, graph_inputs=gin,
                      scaler=ScalerStats.from_dict(payload["scaler"]),
                      feature_columns=payload["feature_columns"],
                      seed=int(payload["seed"]))
