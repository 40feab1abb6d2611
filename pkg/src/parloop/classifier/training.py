"""Fine-tuning loop: AdamW, linear warmup/decay, early stopping on validation loss."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ..errors import ConfigError, DivergenceError, ShapeError
from .model import (
    ModelConfig,
    backward,
    check_params,
    cross_entropy,
    cross_entropy_grad,
    forward,
    init_params,
    is_decayed,
    softmax,
)

log = logging.getLogger(__name__)


@dataclass
class Hyperparameters:
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 2e-5
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    patience: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float = 1.0  # 0 disables clipping
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1", "epochs")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1", "batch_size")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive", "learning_rate")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigError("warmup_fraction must lie in [0, 1]", "warmup_fraction")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1", "patience")

    def to_json(self) -> dict:
        return asdict(self)


class Dataset(NamedTuple):
    ids: np.ndarray  # [n, max_len] int
    mask: np.ndarray  # [n, max_len] 0/1
    labels: np.ndarray  # [n] 0/1

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.ids[idx], self.mask[idx], self.labels[idx])


@dataclass
class Checkpoint:
    weights: dict
    config: ModelConfig
    hyper: Hyperparameters | None = None
    epoch: int = 0
    val_loss: float = math.inf
    val_acc: float = 0.0


@dataclass
class TrainingHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_csv(self) -> str:
        rows = ["epoch,train_loss,val_loss,train_acc,val_acc,lr"]
        for e in range(len(self.train_loss)):
            rows.append(
                f"{e + 1},{self.train_loss[e]:.6f},{self.val_loss[e]:.6f},"
                f"{self.train_acc[e]:.6f},{self.val_acc[e]:.6f},{self.lr[e]:.8g}"
            )
        return "\n".join(rows) + "\n"


def lr_schedule(step: int, total_steps: int, peak: float, warmup_fraction: float) -> float:
    """Linear ramp from 0 to ``peak`` over the warmup steps, then linear decay to 0."""
    warmup = int(math.ceil(warmup_fraction * total_steps))
    if step < warmup:
        return peak * step / max(1, warmup)
    return peak * max(0.0, (total_steps - step) / max(1, total_steps - warmup))


class AdamW:
    """Adam with decoupled weight decay; biases and layer-norm parameters are not decayed."""

    def __init__(self, params: dict, hyper: Hyperparameters):
        self.h = hyper
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float) -> None:
        h = self.h
        self.t += 1
        c1 = 1.0 - h.beta1 ** self.t
        c2 = 1.0 - h.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if h.weight_decay and is_decayed(k):
                p *= 1.0 - lr * h.weight_decay
            m, v = self.m[k], self.v[k]
            m *= h.beta1
            m += (1.0 - h.beta1) * g
            v *= h.beta2
            v += (1.0 - h.beta2) * g * g
            p -= (lr / c1) * m / (np.sqrt(v / c2) + h.eps)


def clip_gradients(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for g in grads.values():
            g *= scale
    return norm


def _batches(order: np.ndarray, size: int):
    for start in range(0, len(order), size):
        yield order[start:start + size]


def _canonical_order(data: Dataset) -> np.ndarray:
    """Sort by true length then content, so batching depends only on the sample multiset."""
    lengths = data.mask.sum(1)
    keys = [data.ids[i].tobytes() for i in range(len(data))]
    return np.array(sorted(range(len(data)), key=lambda i: (int(lengths[i]), keys[i])), dtype=np.int64)


def predict_proba(weights: dict, config: ModelConfig, data: Dataset | tuple, batch_size: int = 64) -> np.ndarray:
    """Class probabilities ``[n, 2]``; each sample's result is independent of input order."""
    ids, mask = np.asarray(data[0]), np.asarray(data[1])
    out = np.zeros((len(ids), config.num_labels), dtype=np.float64)
    if len(ids) == 0:
        return out
    order = _canonical_order(Dataset(ids, mask, np.zeros(len(ids), np.int64)))
    for b in _batches(order, batch_size):
        out[b] = softmax(forward(weights, config, ids[b], mask[b]).astype(np.float64))
    return out


def predict(weights: dict, config: ModelConfig, data: Dataset | tuple, batch_size: int = 64) -> np.ndarray:
    """Argmax labels; an exact probability tie resolves to class 0 (Undefined)."""
    p = predict_proba(weights, config, data, batch_size)
    return (p[:, 1] > p[:, 0]).astype(np.int64)


def evaluate(weights: dict, config: ModelConfig, data: Dataset, batch_size: int = 64) -> tuple[float, float]:
    """Mean cross-entropy and accuracy on ``data``."""
    if len(data) == 0:
        return math.nan, math.nan
    p = predict_proba(weights, config, data, batch_size)
    labels = np.asarray(data.labels)
    loss = float(-np.log(np.clip(p[np.arange(len(labels)), labels], 1e-300, None)).mean())
    acc = float(((p[:, 1] > p[:, 0]).astype(np.int64) == labels).mean())
    return loss, acc


def _check_data(data: Dataset, config: ModelConfig, what: str) -> None:
    if data.ids.ndim != 2 or data.ids.shape != data.mask.shape or len(data.labels) != len(data.ids):
        raise ShapeError(f"{what}: ids, mask and labels have inconsistent shapes")
    if data.ids.shape[1] > config.max_len:
        raise ShapeError(f"{what}: sequence length {data.ids.shape[1]} exceeds max_len {config.max_len}")


def train(
    train_set: Dataset,
    val_set: Dataset,
    config: ModelConfig,
    hyper: Hyperparameters,
    weights: dict | None = None,
    on_epoch: Callable[[int, TrainingHistory], None] | None = None,
) -> tuple[Checkpoint, TrainingHistory]:
    """Train from ``weights`` (fresh initialization when omitted).

    Returns the checkpoint with the lowest validation loss (earliest epoch on
    ties) and the per-epoch history. Stops when validation loss has not
    improved for ``hyper.patience`` epochs. Raises :class:`DivergenceError`
    on a non-finite training loss.
    """
    _check_data(train_set, config, "train")
    _check_data(val_set, config, "validation")
    if len(train_set) == 0:
        raise ShapeError("empty training set")
    params = init_params(config) if weights is None else {k: v.copy() for k, v in weights.items()}
    check_params(params, config)
    opt = AdamW(params, hyper)
    steps_per_epoch = math.ceil(len(train_set) / hyper.batch_size)
    total = steps_per_epoch * hyper.epochs
    history = TrainingHistory()
    best = Checkpoint({k: v.copy() for k, v in params.items()}, config, hyper, 0, math.inf, 0.0)
    since_best = 0
    step = 0
    for epoch in range(hyper.epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng([hyper.seed, epoch, 0]).permutation(len(train_set))
        loss_sum = 0.0
        correct = 0
        lr = 0.0
        for j, b in enumerate(_batches(order, hyper.batch_size)):
            step += 1
            lr = lr_schedule(step, total, hyper.learning_rate, hyper.warmup_fraction)
            labels = train_set.labels[b]
            drop_rng = np.random.default_rng([hyper.seed, epoch, 1, j])
            with np.errstate(over="ignore", invalid="ignore"):
                logits, cache = forward(params, config, train_set.ids[b], train_set.mask[b], rng=drop_rng, keep_cache=True)
                loss = cross_entropy(logits, labels)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch + 1}, step {step}")
            grads = backward(params, config, cache, cross_entropy_grad(logits, labels).astype(logits.dtype))
            clip_gradients(grads, hyper.max_grad_norm)
            opt.step(params, grads, lr)
            loss_sum += loss * len(b)
            correct += int(((logits[:, 1] > logits[:, 0]).astype(np.int64) == labels).sum())
        val_loss, val_acc = evaluate(params, config, val_set)
        history.train_loss.append(loss_sum / len(train_set))
        history.train_acc.append(correct / len(train_set))
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)
        history.lr.append(lr)
        log.info(
            "epoch %d: train_loss=%.4f val_loss=%.4f val_acc=%.4f (%.1fs)",
            epoch + 1, history.train_loss[-1], val_loss, val_acc, time.perf_counter() - t0,
        )
        if not math.isfinite(val_loss) and len(val_set):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch + 1}")
        if len(val_set) == 0 or val_loss < best.val_loss:
            best = Checkpoint({k: v.copy() for k, v in params.items()}, config, hyper, epoch + 1, val_loss, val_acc)
            history.best_epoch = epoch + 1
            since_best = 0
        else:
            since_best += 1
        if on_epoch is not None:
            on_epoch(epoch + 1, history)
        if since_best >= hyper.patience:
            history.stopped_early = True
            break
    return best, history
