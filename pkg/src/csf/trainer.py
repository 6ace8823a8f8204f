"""Training loop: multi-head cross-entropy, AdamW, one-cycle cosine schedule.

Steps per epoch use ceil(train_size / batch): the last short batch is kept,
which is what makes the default 16,996-sample / batch-64 / 15-epoch setup
come out at exactly 3,990 optimizer steps. The schedule warms up linearly
from max_lr/25 to max_lr over the first 10% of steps (peaking exactly at the
warmup boundary), then decays along a cosine to max_lr/2500 at the final step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor as tk
from .model import ModelConfig, ModelParameters, forward, init_parameters, logits_to_frame
from .schema import SLOT_NAMES
from .tensor import Tape, Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
WARMUP_DIV = 25.0
FINAL_DIV = 2500.0


class DivergenceError(RuntimeError):
    pass


class StepOutOfRangeError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 64
    max_lr: float = 2e-4
    epochs: int = 15
    weight_decay: float = 0.01
    warmup_fraction: float = 0.10
    clip_norm: float = 1.0
    seed: int = 42

    def total_steps(self, train_size: int) -> int:
        return math.ceil(train_size / self.batch) * self.epochs

    def warmup_steps(self, train_size: int) -> int:
        return int(round(self.warmup_fraction * self.total_steps(train_size)))


def onecycle_lr(step: int, cfg: TrainConfig, train_size: int) -> float:
    """Learning rate at a 0-based optimizer step."""
    total = cfg.total_steps(train_size)
    if not 0 <= step < total:
        raise StepOutOfRangeError(f"step {step} outside [0, {total})")
    warmup = cfg.warmup_steps(train_size)
    start = cfg.max_lr / WARMUP_DIV
    end = cfg.max_lr / FINAL_DIV
    if warmup > 0 and step <= warmup:
        return start + (cfg.max_lr - start) * step / warmup
    if total - 1 <= warmup:
        return cfg.max_lr
    progress = (step - warmup) / (total - 1 - warmup)
    return end + (cfg.max_lr - end) * 0.5 * (1.0 + math.cos(math.pi * progress))


def multi_head_loss(logits: list[Tensor], label_indices: np.ndarray) -> Tensor:
    """Unweighted mean over the nine per-slot batch cross-entropies."""
    if len(logits) != len(SLOT_NAMES):
        raise tk.ShapeMismatchError(f"expected {len(SLOT_NAMES)} logit groups, got {len(logits)}")
    total = tk.softmax_cross_entropy(logits[0], label_indices[:, 0])
    for s in range(1, len(logits)):
        total = tk.add(total, tk.softmax_cross_entropy(logits[s], label_indices[:, s]))
    return tk.scale(total, 1.0 / len(logits))


class AdamW:
    """Decoupled-weight-decay Adam; decay skips biases and layer-norm params."""

    def __init__(self, params: ModelParameters, weight_decay: float):
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params}
        self.v = {name: np.zeros_like(t.data) for name, t in params}

    @staticmethod
    def decays(name: str) -> bool:
        last = name.rsplit(".", 1)[-1]
        return not (last == "gain" or last.startswith("b"))

    def step(self, params: ModelParameters, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - ADAM_BETA1**t
        bc2 = 1.0 - ADAM_BETA2**t
        for name, p in params:
            g = p.grad
            if g is None:
                raise tk.TensorError(f"parameter {name} has no gradient")
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
            if self.weight_decay and self.decays(name):
                update = update + self.weight_decay * p.data
            p.data -= np.asarray(lr, dtype=p.data.dtype) * update.astype(p.data.dtype)


def clip_gradients(params: ModelParameters, max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm."""
    total = 0.0
    for _, p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        factor = max_norm / norm
        for _, p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    accuracy: dict[str, float]
    average: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)

    def best_average(self) -> float:
        return max((e.average for e in self.epochs), default=0.0)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.epochs:
                record = {"epoch": e.epoch, "loss": e.loss, "lr": e.lr}
                record.update({f"acc_{s}": e.accuracy[s] for s in SLOT_NAMES})
                record["average"] = e.average
                fh.write(json.dumps(record) + "\n")


@dataclass
class TrainResult:
    params: ModelParameters       # best-average-accuracy checkpoint
    final_params: ModelParameters
    history: TrainHistory
    steps: int


def _encode_dataset(tokenizer, samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    encs = [tokenizer.encode(s.text) for s in samples]
    ids = np.stack([e.ids for e in encs])
    mask = np.stack([e.attention_mask for e in encs])
    labels = np.array([s.labels.to_indices() for s in samples], dtype=np.int64)
    return ids, mask, labels


def _eval_indices(params, config, ids, mask, labels, batch_size=512) -> dict[str, float]:
    correct = np.zeros(len(SLOT_NAMES), dtype=np.int64)
    n = ids.shape[0]
    lengths = mask.sum(axis=1)
    order = np.argsort(lengths, kind="stable")
    for start in range(0, n, batch_size):
        chunk = order[start : start + batch_size]
        width = int(lengths[chunk].max())
        logits = forward(params, config, ids[chunk, :width], mask[chunk, :width])
        for s, t in enumerate(logits):
            correct[s] += int((t.data.argmax(axis=1) == labels[chunk, s]).sum())
    return {slot: float(correct[s] / n) for s, slot in enumerate(SLOT_NAMES)}


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    dataset,
    tokenizer,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """Train from scratch on a DatasetSplit; deterministic for a fixed seed."""
    params = init_parameters(model_cfg, seed=train_cfg.seed)
    optimizer = AdamW(params, weight_decay=train_cfg.weight_decay)
    shuffle_rng = np.random.default_rng(train_cfg.seed + 1)
    dropout_rng = np.random.default_rng(train_cfg.seed + 2)

    ids, mask, labels = _encode_dataset(tokenizer, dataset.train)
    val_ids, val_mask, val_labels = _encode_dataset(tokenizer, dataset.val)
    n = ids.shape[0]
    total_steps = train_cfg.total_steps(n)

    history = TrainHistory()
    best_params = params.copy()
    best_average = -1.0
    step = 0
    lr = 0.0
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, train_cfg.batch):
            idx = order[start : start + train_cfg.batch]
            width = int(mask[idx].sum(axis=1).max())
            params.zero_grad()
            with Tape() as tape:
                logits = forward(
                    params,
                    model_cfg,
                    ids[idx, :width],
                    mask[idx, :width],
                    training=True,
                    dropout_rng=dropout_rng,
                )
                loss = multi_head_loss(logits, labels[idx])
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise DivergenceError(f"non-finite loss {loss_value} at step {step}")
            tape.backward(loss)
            clip_gradients(params, train_cfg.clip_norm)
            lr = onecycle_lr(step, train_cfg, n)
            optimizer.step(params, lr)
            step += 1
            epoch_loss += loss_value
            batches += 1

        accuracy = _eval_indices(params, model_cfg, val_ids, val_mask, val_labels)
        average = float(sum(accuracy.values()) / len(accuracy))
        record = EpochRecord(
            epoch=epoch,
            loss=epoch_loss / batches,
            lr=lr,
            accuracy=accuracy,
            average=average,
        )
        history.epochs.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if average > best_average:
            best_average = average
            best_params = params.copy()

    assert step == total_steps
    return TrainResult(params=best_params, final_params=params, history=history, steps=step)
