"""Neural building blocks over the grid: attention, convolution, recurrence.

The attention layer scores each directed edge (self-loops included) from the
destination embedding, the source embedding, and a learned projection of the
physical edge attributes; scores are normalized per destination neighborhood.
Writing the score as three block dot-products keeps the plain no-edge variant
numerically identical to the edge-aware one with a zero edge projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .graph import NeighborhoodIndex
from .tensor import Tensor


@dataclass
class EdgeGatParams:
    """Per-head attention parameters with an edge-attribute projection.

    Head k carries a node transform w[k] of [d_in, d_head], an edge transform
    u[k] of [d_e, d_head], and a scoring vector a[k] of [3 * d_head] laid out
    as [destination | source | edge] blocks.
    """

    w: list[Tensor]
    u: list[Tensor]
    a: list[Tensor]
    leaky_slope: float = 0.2
    dropout_rate: float = 0.0

    @property
    def heads(self) -> int:
        return len(self.w)

    @property
    def d_head(self) -> int:
        return self.w[0].shape[1]

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for k in range(self.heads):
            yield f"{prefix}.h{k}.w", self.w[k]
            yield f"{prefix}.h{k}.u", self.u[k]
            yield f"{prefix}.h{k}.a", self.a[k]


@dataclass
class GatParams:
    """Attention parameters without edge attributes; a[k] is [2 * d_head]."""

    w: list[Tensor]
    a: list[Tensor]
    leaky_slope: float = 0.2
    dropout_rate: float = 0.0

    @property
    def heads(self) -> int:
        return len(self.w)


@dataclass
class GcnParams:
    """Convolution weight, plus an edge-attribute transform for the edge-aware variant."""

    w: Tensor
    v: Tensor | None = None

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.w", self.w
        if self.v is not None:
            yield f"{prefix}.v", self.v


@dataclass
class LstmLayerParams:
    w_i: Tensor
    w_f: Tensor
    w_g: Tensor
    w_o: Tensor
    u_i: Tensor
    u_f: Tensor
    u_g: Tensor
    u_o: Tensor
    b_i: Tensor
    b_f: Tensor
    b_g: Tensor
    b_o: Tensor


@dataclass
class LstmParams:
    layers: list[LstmLayerParams]
    dropout_rate: float = 0.0

    @property
    def hidden(self) -> int:
        return self.layers[0].u_i.shape[0]

    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for li, layer in enumerate(self.layers):
            for gate in ("i", "f", "g", "o"):
                yield f"{prefix}.l{li}.w_{gate}", getattr(layer, f"w_{gate}")
                yield f"{prefix}.l{li}.u_{gate}", getattr(layer, f"u_{gate}")
                yield f"{prefix}.l{li}.b_{gate}", getattr(layer, f"b_{gate}")


# --------------------------------------------------------------------------
# Initialization: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero
# biases, +1 forget-gate bias.
# --------------------------------------------------------------------------

def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=shape))


def init_edge_gat(rng, d_in: int, d_e: int, heads: int, d_out: int,
                  leaky_slope: float = 0.2, dropout_rate: float = 0.0) -> EdgeGatParams:
    if d_out % heads != 0:
        raise ConfigError(f"attention output width {d_out} not divisible by {heads} heads")
    d_head = d_out // heads
    w, u, a = [], [], []
    for _ in range(heads):
        w.append(_uniform(rng, (d_in, d_head), d_in))
        u.append(_uniform(rng, (d_e, d_head), d_e))
        a.append(_uniform(rng, (3 * d_head,), 3 * d_head))
    return EdgeGatParams(w=w, u=u, a=a, leaky_slope=leaky_slope, dropout_rate=dropout_rate)


def init_gcn(rng, d_in: int, d_out: int, d_e: int | None = None) -> GcnParams:
    v = _uniform(rng, (d_e, d_out), d_e) if d_e is not None else None
    return GcnParams(w=_uniform(rng, (d_in, d_out), d_in), v=v)


def init_lstm(rng, d_in: int, hidden: int, n_layers: int,
              dropout_rate: float = 0.0) -> LstmParams:
    layers = []
    for li in range(n_layers):
        width = d_in if li == 0 else hidden
        kw = {}
        for gate in ("i", "f", "g", "o"):
            kw[f"w_{gate}"] = _uniform(rng, (width, hidden), width)
            kw[f"u_{gate}"] = _uniform(rng, (hidden, hidden), hidden)
            bias = np.ones(hidden) if gate == "f" else np.zeros(hidden)
            kw[f"b_{gate}"] = T.parameter(bias)
        layers.append(LstmLayerParams(**kw))
    return LstmParams(layers=layers, dropout_rate=dropout_rate)


def init_linear(rng, d_in: int, d_out: int) -> tuple[Tensor, Tensor]:
    return _uniform(rng, (d_in, d_out), d_in), T.parameter(np.zeros(d_out))


# --------------------------------------------------------------------------
# Forward passes
# --------------------------------------------------------------------------

def _head_scores(wh: Tensor, ue: Tensor | None, a: Tensor,
                 nbr: NeighborhoodIndex, slope: float) -> Tensor:
    """Per-entry raw attention scores as LeakyReLU of block dot-products."""
    d_head = wh.shape[1]
    a_col = T.reshape(a, (a.shape[0], 1))
    a_dst = T.slice_axis(a_col, 0, 0, d_head)
    a_src = T.slice_axis(a_col, 0, d_head, 2 * d_head)
    per_node_dst = T.matmul(wh, a_dst)
    per_node_src = T.matmul(wh, a_src)
    s = T.add(T.gather_rows(per_node_dst, nbr.segment_of),
              T.gather_rows(per_node_src, nbr.src))
    if ue is not None:
        a_edge = T.slice_axis(a_col, 0, 2 * d_head, 3 * d_head)
        s = T.add(s, T.gather_rows(T.matmul(ue, a_edge), nbr.attr_row))
    return T.leaky_relu(T.reshape(s, (s.shape[0],)), slope)


def _attend(wh: Tensor, scores: Tensor, nbr: NeighborhoodIndex,
            dropout_rate: float, training: bool, rng) -> Tensor:
    alpha = T.segment_softmax(scores, nbr.segment_of)
    alpha = T.dropout(alpha, dropout_rate, training, rng)
    messages = T.row_scale(T.gather_rows(wh, nbr.src), alpha)
    return T.elu(T.segment_sum(messages, nbr.segment_of, nbr.n_nodes))


def edge_gat_forward(h: Tensor, nbr: NeighborhoodIndex, edge_attrs: Tensor,
                     p: EdgeGatParams, training: bool = False,
                     rng: np.random.Generator | None = None) -> Tensor:
    """Multi-head edge-aware attention; heads are concatenated feature-wise."""
    if h.shape[0] != nbr.n_nodes:
        raise DimensionError(
            f"node features {list(h.shape)} do not cover {nbr.n_nodes} nodes")
    if edge_attrs.shape[0] != nbr.n_entries:
        raise DimensionError(
            f"edge attributes {list(edge_attrs.shape)} do not cover "
            f"{nbr.n_entries} neighborhood entries")
    outs = []
    for k in range(p.heads):
        wh = T.matmul(h, p.w[k])
        ue = T.matmul(edge_attrs, p.u[k])
        scores = _head_scores(wh, ue, p.a[k], nbr, p.leaky_slope)
        outs.append(_attend(wh, scores, nbr, p.dropout_rate, training, rng))
    return outs[0] if len(outs) == 1 else T.concat(outs, axis=1)


def gat_forward(h: Tensor, nbr: NeighborhoodIndex, p: GatParams,
                training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Attention from node features alone (no edge attributes)."""
    outs = []
    for k in range(p.heads):
        wh = T.matmul(h, p.w[k])
        scores = _head_scores(wh, None, p.a[k], nbr, p.leaky_slope)
        outs.append(_attend(wh, scores, nbr, p.dropout_rate, training, rng))
    return outs[0] if len(outs) == 1 else T.concat(outs, axis=1)


def attention_weights(h: Tensor, nbr: NeighborhoodIndex, edge_attrs: Tensor,
                      p: EdgeGatParams) -> list[np.ndarray]:
    """Per-head normalized attention coefficients, for inspection/export."""
    weights = []
    with T.no_grad():
        for k in range(p.heads):
            wh = T.matmul(h, p.w[k])
            ue = T.matmul(edge_attrs, p.u[k])
            scores = _head_scores(wh, ue, p.a[k], nbr, p.leaky_slope)
            weights.append(T.segment_softmax(scores, nbr.segment_of).data.copy())
    return weights


def two_tower_gat(h: Tensor, nbr: NeighborhoodIndex, edge_attrs: Tensor,
                  p1: EdgeGatParams, p2: EdgeGatParams, training: bool = False,
                  rng: np.random.Generator | None = None) -> Tensor:
    """Two parallel attention layers over the same input, concatenated."""
    return T.concat([edge_gat_forward(h, nbr, edge_attrs, p1, training, rng),
                     edge_gat_forward(h, nbr, edge_attrs, p2, training, rng)], axis=1)


def gcn_forward(h: Tensor, a_hat: Tensor, p: GcnParams) -> Tensor:
    """ReLU of the normalized-adjacency convolution."""
    if a_hat.shape[0] != a_hat.shape[1] or a_hat.shape[1] != h.shape[0]:
        raise DimensionError(
            f"adjacency {list(a_hat.shape)} incompatible with features {list(h.shape)}")
    return T.relu(T.matmul(T.matmul(a_hat, h), p.w))


def edge_gcn_forward(h: Tensor, nbr: NeighborhoodIndex, edge_attrs: Tensor,
                     p: GcnParams) -> Tensor:
    """Mean aggregation of linearly transformed neighbor and edge features."""
    if p.v is None:
        raise ConfigError("edge-aware convolution needs the edge transform v")
    wh = T.matmul(h, p.w)
    ve = T.matmul(edge_attrs, p.v)
    messages = T.add(T.gather_rows(wh, nbr.src), T.gather_rows(ve, nbr.attr_row))
    total = T.segment_sum(messages, nbr.segment_of, nbr.n_nodes)
    inv_size = T.tensor(1.0 / nbr.segment_sizes())
    return T.relu(T.row_scale(total, inv_size))


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              wx: Tensor, uh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One recurrence step as a single taped operation.

    Gate pre-activations are x @ wx + h @ uh + b with the four gate blocks
    laid out [input | forget | cell | output]; then c' = f*c + i*g and
    h' = o * tanh(c').  The fused backward applies the textbook cell
    derivatives, which the finite-difference suite pins down.
    """
    hidden = h_prev.shape[1]
    xd, hd, cd = x.data, h_prev.data, c_prev.data
    wxd, uhd, bd = wx.data, uh.data, b.data
    gates = xd @ wxd + hd @ uhd + bd
    # one tanh over the whole gate block; sigmoid(z) = (1 + tanh(z/2)) / 2
    # and tanh(z) = 2 t / (1 + t^2) with t = tanh(z/2)
    half = np.tanh(gates * 0.5)
    i = 0.5 * (1.0 + half[:, :hidden])
    f = 0.5 * (1.0 + half[:, hidden:2 * hidden])
    tg = half[:, 2 * hidden:3 * hidden]
    g = 2.0 * tg / (1.0 + tg * tg)
    o = 0.5 * (1.0 + half[:, 3 * hidden:])
    c_new = f * cd + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    inputs = (x, h_prev, c_prev, wx, uh, b)
    requires = T.is_grad_enabled() and any(t.requires_grad for t in inputs)
    h_out = T.make_output(h_new, requires)
    c_out = T.make_output(c_new, requires)
    if not requires:
        return h_out, c_out

    def bwd(gh, gc):
        if gh is None:
            gh = np.zeros_like(h_new)
        dc = (gc if gc is not None else 0.0) + gh * o * (1.0 - tc * tc)
        d_i = dc * g * i * (1.0 - i)
        d_f = dc * cd * f * (1.0 - f)
        d_g = dc * i * (1.0 - g * g)
        d_o = gh * tc * o * (1.0 - o)
        dgates = np.concatenate([d_i, d_f, d_g, d_o], axis=1)
        return (
            (x, dgates @ wxd.T if x.requires_grad else None),
            (h_prev, dgates @ uhd.T if h_prev.requires_grad else None),
            (c_prev, dc * f if c_prev.requires_grad else None),
            (wx, xd.T @ dgates if wx.requires_grad else None),
            (uh, hd.T @ dgates if uh.requires_grad else None),
            (b, dgates.sum(axis=0) if b.requires_grad else None),
        )

    T.record_op(inputs, (h_out, c_out), bwd)
    return h_out, c_out


def lstm_forward(z: Tensor | list[Tensor], p: LstmParams, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    """Stacked LSTM; returns the last-step top-layer hidden state.

    ``z`` is either [B, T, d] or an already-sliced list of T step tensors of
    [B, d].  States start at zero.  Dropout is applied to the hidden sequence
    between stacked layers in training mode, never after the top layer.
    """
    if isinstance(z, list):
        inputs = z
        batch = inputs[0].shape[0]
    else:
        if z.data.ndim != 3:
            raise DimensionError(f"lstm input must be [B, T, d], got {list(z.shape)}")
        batch, steps, _ = z.shape
        inputs = [T.time_slice(z, t) for t in range(steps)]
    hidden = p.hidden
    h = None
    for li, layer in enumerate(p.layers):
        # one fused gate matrix per layer keeps the step loop at one cell op
        wx = T.concat([layer.w_i, layer.w_f, layer.w_g, layer.w_o], axis=1)
        uh = T.concat([layer.u_i, layer.u_f, layer.u_g, layer.u_o], axis=1)
        b = T.concat([layer.b_i, layer.b_f, layer.b_g, layer.b_o], axis=0)
        h = T.zeros((batch, hidden))
        c = T.zeros((batch, hidden))
        outputs = []
        for x in inputs:
            h, c = lstm_cell(x, h, c, wx, uh, b)
            outputs.append(h)
        if li + 1 < len(p.layers) and p.dropout_rate > 0:
            outputs = [T.dropout(o, p.dropout_rate, training, rng) for o in outputs]
        inputs = outputs
    return h


def linear_forward(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return T.add_bias(T.matmul(x, w), b)
