"""Training regimen: MSE loss, Adam with coupled weight decay, plateau-
triggered learning-rate decay, early stopping, and per-epoch history capture.

All randomness derives from one master seed through named substreams
(parameter init, dropout, batch shuffling), so a rerun with the same inputs
reproduces the history bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError, NumericalAbort
from .pipeline import ProcessedDataset, SequenceDataset
from .seeding import substream
from .tensor import Tensor


def mse_loss(y_hat: Tensor, y: Tensor) -> Tensor:
    if y_hat.shape != y.shape:
        raise DimensionError(
            f"mse_loss: shapes {list(y_hat.shape)} and {list(y.shape)} differ")
    diff = T.sub(y_hat, y)
    return T.mean_all(T.mul(diff, diff))


# --------------------------------------------------------------------------
# Adam with coupled L2 weight decay
# --------------------------------------------------------------------------

@dataclass
class OptimState:
    """First/second moments per parameter plus the mutable learning rate."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, params: list[Tensor], lr: float,
                   weight_decay: float = 0.0) -> "OptimState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params],
                   t=0, lr=lr, weight_decay=weight_decay)


def adam_step(params: list[Tensor], state: OptimState) -> None:
    """One in-place update; grads must have been populated by a backward pass."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    step = state.lr / bias1
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"adam_step: parameter {i} has no gradient")
        g = p.grad
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v / bias2)
        denom += state.eps
        p.data -= step * m / denom


def zero_grads(params: list[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# --------------------------------------------------------------------------
# Schedules
# --------------------------------------------------------------------------

@dataclass
class TrainState:
    """Epoch counters, best-validation tracking, and the loss history."""

    epoch: int = 0
    best_val_loss: float = float("inf")
    epochs_since_improvement: int = 0
    lr_epochs_since_improvement: int = 0
    history: list[dict] = field(default_factory=list)


def plateau_scheduler(state: TrainState, optim: OptimState, val_loss: float,
                      patience: int = 5, factor: float = 0.1) -> None:
    """Multiply lr by ``factor`` after ``patience`` consecutive non-improving
    epochs; any strict improvement resets the count."""
    if val_loss < state.best_val_loss:
        state.lr_epochs_since_improvement = 0
        return
    state.lr_epochs_since_improvement += 1
    if state.lr_epochs_since_improvement >= patience:
        optim.lr *= factor
        state.lr_epochs_since_improvement = 0


def early_stopping(state: TrainState, val_loss: float, patience: int = 10) -> bool:
    """Return True once ``patience`` consecutive epochs fail to improve.

    Also maintains ``best_val_loss``, so call it after the scheduler.
    """
    if val_loss < state.best_val_loss:
        state.best_val_loss = val_loss
        state.epochs_since_improvement = 0
        return False
    state.epochs_since_improvement += 1
    return state.epochs_since_improvement >= patience


# --------------------------------------------------------------------------
# Run configuration
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything a training run needs beyond the dataset itself.

    The optional ``*_span`` entries (``LO:HI``) pin the split boundaries the
    run expects; training refuses a dataset whose splits disagree.
    """

    variant: str = "gat-lstm"
    seq_len: int = 24
    gat_out: int = 64
    heads: int = 8
    lstm_hidden: int = 128
    lstm_layers: int = 4
    gat_dropout: float = 0.2
    lstm_dropout: float = 0.3
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    epochs: int = 200
    lr_patience: int = 5
    stop_patience: int = 10
    scheduler_enabled: bool = True
    seed: int = 42
    train_span: str = ""
    validation_span: str = ""
    test_span: str = ""

    def model_config(self, d_s: int) -> M.ModelConfig:
        return M.ModelConfig(variant=self.variant, seq_len=self.seq_len, d_s=d_s,
                             gat_out=self.gat_out, heads=self.heads,
                             lstm_hidden=self.lstm_hidden, lstm_layers=self.lstm_layers,
                             gat_dropout=self.gat_dropout, lstm_dropout=self.lstm_dropout)

    def check_splits(self, spec) -> None:
        import pandas as pd

        for name, claim in (("train", self.train_span),
                            ("validation", self.validation_span),
                            ("test", self.test_span)):
            if not claim:
                continue
            lo, hi = (pd.Timestamp(part) for part in claim.split(":", 1))
            actual = spec.intervals()[name]
            if (lo, hi) != actual:
                raise ConfigError(
                    f"run config expects {name} split {lo}..{hi}, dataset has "
                    f"{actual[0]}..{actual[1]}")


# --------------------------------------------------------------------------
# The training loop
# --------------------------------------------------------------------------

def _epoch_loss(total: float, batches: int) -> float:
    return total / max(batches, 1)


def evaluate_loss(config, params, gin, data: SequenceDataset) -> float:
    """Full-pass MSE in eval mode; never records a tape or touches params."""
    total = 0.0
    with T.no_grad():
        for batch in data.batches():
            y_hat = M.forward(config, params, gin, batch, training=False)
            diff = y_hat.data - batch.y.data
            total += float(np.mean(diff * diff))
    return _epoch_loss(total, len(data))


def train(run: RunConfig, dataset: ProcessedDataset, gin: M.GraphInputs,
          log=None) -> tuple[M.ModelParams, TrainState]:
    """Run the epoch loop and return (best-epoch parameters, history).

    Batches are node-aligned (all states at one window position); their order
    is reshuffled each epoch from the shuffle substream.  Validation runs with
    dropout off and gradients disabled; the checkpoint returned is the one
    with the lowest validation loss.
    """
    run.check_splits(dataset.split_spec)
    train_data = SequenceDataset(dataset.splits["train"], run.seq_len)
    val_data = SequenceDataset(dataset.splits["validation"], run.seq_len)
    if len(train_data) == 0 or len(val_data) == 0:
        raise ConfigError("training and validation splits must produce windows")

    d_s = len(dataset.feature_columns)
    config = run.model_config(d_s)
    init_rng = substream(run.seed, "init")
    dropout_rng = substream(run.seed, "dropout")
    shuffle_rng = substream(run.seed, "shuffle")
    params = M.init_params(config, gin.d_node, gin.d_edge, init_rng)
    tensors = params.tensors()
    optim = OptimState.for_params(tensors, lr=run.learning_rate,
                                  weight_decay=run.weight_decay)
    state = TrainState()
    best_params = params.copy()

    for epoch in range(1, run.epochs + 1):
        state.epoch = epoch
        order = shuffle_rng.permutation(len(train_data))
        total = 0.0
        for bi, batch in enumerate(train_data.batches(order)):
            T.reset_tape()
            zero_grads(tensors)
            y_hat = M.forward(config, params, gin, batch, training=True,
                              rng=dropout_rng)
            loss = mse_loss(y_hat, batch.y)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise NumericalAbort(
                    f"non-finite training loss at epoch {epoch}, batch {bi}",
                    epoch=epoch, batch=bi)
            T.backward(loss)
            adam_step(tensors, optim)
            total += loss_val
        train_loss = _epoch_loss(total, len(train_data))
        val_loss = evaluate_loss(config, params, gin, val_data)
        if not np.isfinite(val_loss):
            raise NumericalAbort(f"non-finite validation loss at epoch {epoch}",
                                 epoch=epoch, batch=-1)
        state.history.append({"epoch": epoch, "train_loss": train_loss,
                              "val_loss": val_loss, "lr": optim.lr})
        if log is not None:
            log(f"epoch {epoch}: train {train_loss:.6f}  val {val_loss:.6f}  "
                f"lr {optim.lr:g}")
        improved = val_loss < state.best_val_loss
        if run.scheduler_enabled:
            plateau_scheduler(state, optim, val_loss, patience=run.lr_patience)
        stop = early_stopping(state, val_loss, patience=run.stop_patience)
        if improved:
            best_params = params.copy()
        if stop:
            break
    return best_params, state


# --------------------------------------------------------------------------
# History export
# --------------------------------------------------------------------------

def save_history(path: str | Path, state: TrainState) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for row in state.history:
            writer.writerow([row["epoch"], repr(row["train_loss"]),
                             repr(row["val_loss"]), repr(row["lr"])])


def load_history(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"epoch": int(r["epoch"]), "train_loss": float(r["train_loss"]),
                 "val_loss": float(r["val_loss"]), "lr": float(r["lr"])}
                for r in csv.DictReader(fh)]
