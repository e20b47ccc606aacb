"""Dense double-precision tensors with reverse-mode automatic differentiation.

Operations record themselves on a per-thread tape while gradients are
enabled; ``backward`` on a scalar replays the tape in reverse and then
discards it.  Binary elementwise operations require equal shapes (scalars
are the only implicit broadcast); anything graph- or sequence-shaped goes
through an explicit operation with its own backward rule.
"""

from __future__ import annotations

import itertools
import threading
from typing import Sequence

import numpy as np

from .errors import ContractError, DimensionError, InvalidGraphError

Array = np.ndarray

_node_ids = itertools.count()


class Tensor:
    """A dense float64 array plus its position in the current tape."""

    __slots__ = ("data", "requires_grad", "grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self.node_id = next(_node_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> Array:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"

    # Scalar-or-tensor arithmetic sugar; real work happens in module functions.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


# --------------------------------------------------------------------------
# Tape machinery
# --------------------------------------------------------------------------

class _Record:
    __slots__ = ("outs", "backward")

    def __init__(self, outs: tuple[Tensor, ...], backward_fn):
        self.outs = outs
        self.backward = backward_fn


class Tape:
    """Ordered log of recorded operations for one forward/backward pass.

    Records are appended in execution order, so inputs always precede the
    operations that consume them; replaying the list in reverse is a valid
    reverse-topological traversal.  A record may produce several outputs
    (e.g. a recurrence cell emitting both of its states).
    """

    __slots__ = ("records", "leaves", "_produced")

    def __init__(self):
        self.records: list[_Record] = []
        self.leaves: dict[int, Tensor] = {}
        self._produced: set[int] = set()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, inputs: Sequence[Tensor], outs: tuple[Tensor, ...], backward_fn) -> None:
        produced = self._produced
        leaves = self.leaves
        for t in inputs:
            nid = t.node_id
            if t.requires_grad and nid not in produced and nid not in leaves:
                leaves[nid] = t
        for out in outs:
            produced.add(out.node_id)
        self.records.append(_Record(outs, backward_fn))

    def run_backward(self, loss: Tensor) -> None:
        if loss.node_id not in self._produced:
            raise ContractError("loss tensor is not connected to the active tape")
        grads: dict[int, Array] = {loss.node_id: np.ones_like(loss.data)}
        # ids whose stored gradient buffer is private and safe to add into;
        # a first contribution may alias a closure's output, so the second
        # contribution copies before any in-place accumulation
        owned: set[int] = set()
        for rec in reversed(self.records):
            outs = rec.outs
            if len(outs) == 1:
                out = outs[0]
                g_out = grads.pop(out.node_id, None)
                if g_out is None:
                    continue
                out.grad = g_out
                pairs = rec.backward(g_out)
            else:
                g_list = [grads.pop(o.node_id, None) for o in outs]
                if all(g is None for g in g_list):
                    continue
                for o, g in zip(outs, g_list):
                    if g is not None:
                        o.grad = g
                pairs = rec.backward(*g_list)
            for t_in, g_in in pairs:
                if g_in is None:
                    continue
                nid = t_in.node_id
                prev = grads.get(nid)
                if prev is None:
                    grads[nid] = g_in
                elif nid in owned:
                    prev += g_in
                else:
                    grads[nid] = prev + g_in
                    owned.add(nid)
        for nid, leaf in self.leaves.items():
            g = grads.get(nid)
            if g is None:
                continue
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


_tls = threading.local()


def _state():
    try:
        _tls.enabled
    except AttributeError:
        _tls.enabled = True
        _tls.tape = None
    return _tls


def active_tape() -> Tape | None:
    return _state().tape


def reset_tape() -> None:
    _state().tape = None


def is_grad_enabled() -> bool:
    return _state().enabled


class no_grad:
    """Context manager disabling tape recording on this thread."""

    def __enter__(self):
        st = _state()
        self._prev = st.enabled
        st.enabled = False
        return self

    def __exit__(self, *exc):
        _state().enabled = self._prev
        return False


def _record(inputs: Sequence[Tensor], out: Tensor, backward_fn) -> None:
    st = _state()
    tape = st.tape
    if tape is None:
        tape = st.tape = Tape()
    tape.record(inputs, (out,), backward_fn)


def record_op(inputs: Sequence[Tensor], outs: Sequence[Tensor], backward_fn) -> None:
    """Register a custom multi-output operation on the active tape.

    ``backward_fn`` receives one upstream gradient per output (None for
    outputs the loss never reached) and returns (tensor, grad) pairs.
    """
    st = _state()
    tape = st.tape
    if tape is None:
        tape = st.tape = Tape()
    tape.record(inputs, tuple(outs), backward_fn)


def make_output(data: Array, requires_grad: bool) -> Tensor:
    """Wrap raw data as an op output tensor (for custom operations)."""
    return _out(np.asarray(data, dtype=np.float64), requires_grad and is_grad_enabled())


def backward(loss: Tensor) -> None:
    """Populate ``grad`` for every requires_grad tensor reachable from ``loss``.

    The thread's tape is consumed and discarded.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    st = _state()
    if st.tape is None:
        raise ContractError("loss tensor is not connected to the active tape")
    tape = st.tape
    st.tape = None
    tape.run_backward(loss)


def _out(data: Array, requires_grad: bool) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = data
    t.requires_grad = requires_grad
    t.grad = None
    t.node_id = next(_node_ids)
    return t


def _grad_on(*tensors: Tensor) -> bool:
    return _state().enabled and any(t.requires_grad for t in tensors)


# --------------------------------------------------------------------------
# Elementwise and scalar operations
# --------------------------------------------------------------------------

def _coerce_pair(a, b):
    """Return (tensor, tensor|None, scalar|None); scalars stay plain floats."""
    if isinstance(b, Tensor):
        return a, b, None
    if isinstance(b, (int, float, np.integer, np.floating)):
        return a, None, float(b)
    raise ContractError(f"unsupported operand type {type(b).__name__}")


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ")


def add(a: Tensor, b) -> Tensor:
    a, bt, s = _coerce_pair(a, b)
    if bt is None:
        out = _out(a.data + s, a.requires_grad and is_grad_enabled())
        if out.requires_grad:
            _record((a,), out, lambda g: ((a, g),))
        return out
    _check_same_shape("add", a, bt)
    out = _out(a.data + bt.data, _grad_on(a, bt))
    if out.requires_grad:
        _record((a, bt), out, lambda g: ((a, g if a.requires_grad else None),
                                         (bt, g if bt.requires_grad else None)))
    return out


def sub(a: Tensor, b) -> Tensor:
    a, bt, s = _coerce_pair(a, b)
    if bt is None:
        out = _out(a.data - s, a.requires_grad and is_grad_enabled())
        if out.requires_grad:
            _record((a,), out, lambda g: ((a, g),))
        return out
    _check_same_shape("sub", a, bt)
    out = _out(a.data - bt.data, _grad_on(a, bt))
    if out.requires_grad:
        _record((a, bt), out, lambda g: ((a, g if a.requires_grad else None),
                                         (bt, -g if bt.requires_grad else None)))
    return out


def mul(a: Tensor, b) -> Tensor:
    a, bt, s = _coerce_pair(a, b)
    if bt is None:
        return scale(a, s)
    _check_same_shape("mul", a, bt)
    out = _out(a.data * bt.data, _grad_on(a, bt))
    if out.requires_grad:
        ad, bd = a.data, bt.data
        _record((a, bt), out, lambda g: ((a, g * bd if a.requires_grad else None),
                                         (bt, g * ad if bt.requires_grad else None)))
    return out


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = _out(a.data * s, a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        _record((a,), out, lambda g: ((a, g * s),))
    return out


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def sigmoid(a: Tensor) -> Tensor:
    # 0.5 * (1 + tanh(x/2)) is the overflow-free form of 1 / (1 + exp(-x))
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    out = _out(y, a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        _record((a,), out, lambda g: ((a, g * y * (1.0 - y)),))
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = _out(y, a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        _record((a,), out, lambda g: ((a, g * (1.0 - y * y)),))
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = _out(y, a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        _record((a,), out, lambda g: ((a, g * y),))
    return out


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    out = _out(y, a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        mask = a.data > 0
        _record((a,), out, lambda g: ((a, g * mask),))
    return out


def leaky_relu(a: Tensor, slope: float) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ContractError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    x = a.data
    y = np.where(x >= 0, x, slope * x)
    out = _out(y, a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        factor = np.where(x >= 0, 1.0, slope)
        _record((a,), out, lambda g: ((a, g * factor),))
    return out


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    x = a.data
    expm = alpha * (np.exp(np.minimum(x, 0.0)) - 1.0)
    y = np.where(x >= 0, x, expm)
    out = _out(y, a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        factor = np.where(x >= 0, 1.0, expm + alpha)
        _record((a,), out, lambda g: ((a, g * factor),))
    return out


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate); eval is identity."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ContractError("dropout in training mode needs a seeded generator")
    keep = rng.random(a.data.shape) >= rate
    factor = keep / (1.0 - rate)
    out = _out(a.data * factor, a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        _record((a,), out, lambda g: ((a, g * factor),))
    return out


# --------------------------------------------------------------------------
# Linear algebra and structure operations
# --------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul needs 2-D operands, got {list(a.shape)} and {list(b.shape)}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions disagree for {list(a.shape)} and {list(b.shape)}")
    out = _out(a.data @ b.data, _grad_on(a, b))
    if out.requires_grad:
        ad, bd = a.data, b.data
        _record((a, b), out, lambda g: ((a, g @ bd.T if a.requires_grad else None),
                                        (b, ad.T @ g if b.requires_grad else None)))
    return out


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """Add a vector bias across the last axis of ``a``."""
    if b.data.ndim != 1 or a.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(
            f"add_bias: bias {list(b.shape)} does not match last axis of {list(a.shape)}")
    out = _out(a.data + b.data, _grad_on(a, b))
    if out.requires_grad:
        axes = tuple(range(a.data.ndim - 1))
        _record((a, b), out, lambda g: ((a, g if a.requires_grad else None),
                                        (b, g.sum(axis=axes) if b.requires_grad else None)))
    return out


def sum_all(a: Tensor) -> Tensor:
    out = _out(np.asarray(a.data.sum()), a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        shape = a.data.shape
        _record((a,), out, lambda g: ((a, np.full(shape, float(g))),))
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = _out(np.asarray(a.data.mean()), a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        shape = a.data.shape
        _record((a,), out, lambda g: ((a, np.full(shape, float(g) / n)),))
    return out


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = _out(a.data.reshape(shape), a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        orig = a.data.shape
        _record((a,), out, lambda g: ((a, g.reshape(orig)),))
    return out


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    ndim = tensors[0].data.ndim
    if not 0 <= axis < ndim:
        raise DimensionError(f"concat axis {axis} out of range for ndim {ndim}")
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != ndim or any(other[i] != base[i] for i in range(ndim) if i != axis):
            raise DimensionError(
                f"concat: shapes {base} and {other} differ off axis {axis}")
    out = _out(np.concatenate([t.data for t in tensors], axis=axis), _grad_on(*tensors))
    if out.requires_grad:
        widths = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + widths)
        ts = tuple(tensors)

        def bwd(g):
            pieces = []
            for i, t in enumerate(ts):
                if t.requires_grad:
                    sl = [slice(None)] * ndim
                    sl[axis] = slice(offsets[i], offsets[i + 1])
                    pieces.append((t, g[tuple(sl)]))
                else:
                    pieces.append((t, None))
            return pieces

        _record(ts, out, bwd)
    return out


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    ndim = a.data.ndim
    if not 0 <= axis < ndim:
        raise DimensionError(f"slice axis {axis} out of range for ndim {ndim}")
    index = [slice(None)] * ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = _out(a.data[index], a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        shape = a.data.shape

        def bwd(g):
            full = np.zeros(shape)
            full[index] = g
            return ((a, full),)

        _record((a,), out, bwd)
    return out


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows of ``a`` by integer index; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise DimensionError("gather_rows needs a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError(
            f"gather_rows: index out of range for {a.data.shape[0]} rows")
    out = _out(a.data[idx], a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        shape = a.data.shape

        def bwd(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return ((a, full),)

        _record((a,), out, bwd)
    return out


def row_scale(a: Tensor, w: Tensor) -> Tensor:
    """Multiply each row of a 2-D tensor by the matching entry of a vector."""
    if a.data.ndim != 2 or w.data.ndim != 1 or a.data.shape[0] != w.data.shape[0]:
        raise DimensionError(
            f"row_scale: cannot scale rows of {list(a.shape)} by {list(w.shape)}")
    out = _out(a.data * w.data[:, None], _grad_on(a, w))
    if out.requires_grad:
        ad, wd = a.data, w.data
        _record((a, w), out, lambda g: ((a, g * wd[:, None] if a.requires_grad else None),
                                        (w, (g * ad).sum(axis=1) if w.requires_grad else None)))
    return out


def segment_sum(a: Tensor, segments, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets given per-row segment ids."""
    seg = np.asarray(segments, dtype=np.intp)
    if seg.ndim != 1 or seg.shape[0] != a.data.shape[0]:
        raise DimensionError("segment_sum: segment ids must match the leading axis")
    out_shape = (num_segments,) + a.data.shape[1:]
    data = np.zeros(out_shape)
    np.add.at(data, seg, a.data)
    out = _out(data, a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        _record((a,), out, lambda g: ((a, g[seg]),))
    return out


def segment_softmax(scores: Tensor, segments) -> Tensor:
    """Softmax within each segment of a 1-D score vector.

    The per-segment maximum is subtracted before exponentiation; an empty
    segment (an id in [0, max] with no entries) is an invalid graph.
    """
    if scores.data.ndim != 1:
        raise DimensionError(f"segment_softmax needs 1-D scores, got {list(scores.shape)}")
    seg = np.asarray(segments, dtype=np.intp)
    if seg.shape[0] != scores.data.shape[0]:
        raise DimensionError("segment_softmax: segment ids must match scores length")
    if not np.isfinite(scores.data).all():
        raise ContractError("segment_softmax: scores must be finite")
    n = int(seg.max()) + 1 if seg.size else 0
    if n == 0:
        raise InvalidGraphError("segment_softmax: no segments")
    seg_max = np.full(n, -np.inf)
    np.maximum.at(seg_max, seg, scores.data)
    if not np.isfinite(seg_max).all():
        empty = np.nonzero(~np.isfinite(seg_max))[0]
        raise InvalidGraphError(f"segment_softmax: empty segment(s) {empty.tolist()}")
    shifted = np.exp(scores.data - seg_max[seg])
    denom = np.zeros(n)
    np.add.at(denom, seg, shifted)
    alpha = shifted / denom[seg]
    out = _out(alpha, scores.requires_grad and is_grad_enabled())
    if out.requires_grad:
        def bwd(g):
            weighted = alpha * g
            seg_dot = np.zeros(n)
            np.add.at(seg_dot, seg, weighted)
            return ((scores, weighted - alpha * seg_dot[seg]),)

        _record((scores,), out, bwd)
    return out


def repeat_time(a: Tensor, steps: int) -> Tensor:
    """Tile a [B, d] tensor into [B, steps, d]; backward sums over time."""
    if a.data.ndim != 2:
        raise DimensionError(f"repeat_time needs a 2-D tensor, got {list(a.shape)}")
    if steps < 1:
        raise ContractError("repeat_time needs steps >= 1")
    out = _out(np.repeat(a.data[:, None, :], steps, axis=1),
               a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        _record((a,), out, lambda g: ((a, g.sum(axis=1)),))
    return out


def time_slice(a: Tensor, t: int) -> Tensor:
    """Select step ``t`` of a [B, T, d] tensor as [B, d]."""
    if a.data.ndim != 3:
        raise DimensionError(f"time_slice needs a 3-D tensor, got {list(a.shape)}")
    if not 0 <= t < a.data.shape[1]:
        raise IndexError(f"time_slice: step {t} out of range for T={a.data.shape[1]}")
    out = _out(a.data[:, t, :], a.requires_grad and is_grad_enabled())
    if out.requires_grad:
        shape = a.data.shape

        def bwd(g):
            full = np.zeros(shape)
            full[:, t, :] = g
            return ((a, full),)

        _record((a,), out, bwd)
    return out
