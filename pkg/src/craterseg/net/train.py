"""Training loop: mini-batch ADAM over BCE, plus the fine-tuning protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import UNetConfig, Weights, forward, loss_and_grads, pixel_accuracy, bce_with_logits
from .optim import adam_step


class TrainingDivergedError(RuntimeError):
    """Raised when the loss stops being finite; names the offending step."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings; defaults follow the reference training setup."""

    learning_rate: float = 1e-4
    l2_coeff: float = 1e-5
    dropout_rate: float = 0.15
    epochs: int = 30
    batch_size: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float | None
    val_accuracy: float | None


@dataclass
class TrainReport:
    """One EpochStats record per completed epoch."""

    epochs: list[EpochStats]

    CSV_HEADER = "epoch,train_loss,train_accuracy,val_loss,val_accuracy"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for e in self.epochs:
            val_loss = "" if e.val_loss is None else repr(e.val_loss)
            val_acc = "" if e.val_accuracy is None else repr(e.val_accuracy)
            lines.append(f"{e.epoch},{e.train_loss!r},{e.train_accuracy!r},{val_loss},{val_acc}")
        return "\n".join(lines) + "\n"


def _step_seed(seed: int, epoch: int, step: int) -> int:
    ss = np.random.SeedSequence((seed, 1, epoch, step))
    return int(ss.generate_state(1, np.uint64)[0])


def evaluate(
    weights: Weights,
    config: UNetConfig,
    images: np.ndarray,
    masks: np.ndarray,
    batch_size: int = 8,
) -> tuple[float, float]:
    """Mean loss and pixel accuracy over a dataset, in inference mode."""
    loss_sum = 0.0
    acc_sum = 0.0
    n_pix = 0
    for lo in range(0, len(images), batch_size):
        x = images[lo : lo + batch_size]
        z = np.asarray(masks[lo : lo + batch_size], dtype=config.np_dtype)
        logits = forward(weights, config, x)
        per_pixel, _ = bce_with_logits(logits, z)
        loss_sum += float(per_pixel.sum(dtype=np.float64))
        acc_sum += pixel_accuracy(logits, z) * logits.size
        n_pix += logits.size
    return loss_sum / n_pix, acc_sum / n_pix


def train(
    weights: Weights,
    config: UNetConfig,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray] | None,
    tc: TrainConfig,
) -> tuple[Weights, TrainReport]:
    """Run ``tc.epochs`` of shuffled mini-batch ADAM; returns new weights.

    The input weights are not mutated. Shuffling and dropout streams are
    fully determined by ``tc.seed``, so a rerun reproduces the result
    bit-for-bit in sequential execution.
    """
    images, masks = train_set
    images = np.asarray(images)
    masks = np.asarray(masks)
    if len(images) == 0:
        raise ValueError("training set is empty")
    if len(images) != len(masks):
        raise ValueError(f"images/masks length mismatch: {len(images)} vs {len(masks)}")

    run_cfg = replace(config, dropout_rate=tc.dropout_rate)
    w = weights.copy()
    shuffle_rng = np.random.default_rng([tc.seed, 0])
    report: list[EpochStats] = []
    step = w.step

    for epoch in range(tc.epochs):
        order = shuffle_rng.permutation(len(images))
        loss_sum = 0.0
        acc_sum = 0.0
        n_pix = 0
        for bidx, lo in enumerate(range(0, len(order), tc.batch_size)):
            sel = order[lo : lo + tc.batch_size]
            grads, loss, logits = loss_and_grads(
                w,
                run_cfg,
                images[sel],
                masks[sel],
                training=True,
                seed=_step_seed(tc.seed, epoch, bidx),
                l2_coeff=tc.l2_coeff,
            )
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch + 1}, step {bidx + 1}"
                )
            step += 1
            adam_step(w, grads, step, tc.learning_rate)
            loss_sum += loss * logits.size
            acc_sum += pixel_accuracy(logits, np.asarray(masks[sel], dtype=run_cfg.np_dtype)) * logits.size
            n_pix += logits.size

        if val_set is not None and len(val_set[0]) > 0:
            val_loss, val_acc = evaluate(w, run_cfg, val_set[0], val_set[1])
        else:
            val_loss, val_acc = None, None
        report.append(
            EpochStats(
                epoch=epoch + 1,
                train_loss=loss_sum / n_pix,
                train_accuracy=acc_sum / n_pix,
                val_loss=val_loss,
                val_accuracy=val_acc,
            )
        )
    return w, TrainReport(epochs=report)


def finetune(
    weights: Weights,
    config: UNetConfig,
    new_set: tuple[np.ndarray, np.ndarray],
    tc: TrainConfig,
    epochs: int = 10,
) -> tuple[Weights, TrainReport]:
    """Continue training all layers on a new dataset with a fresh optimizer.

    Mechanically identical to ``train`` (no layer freezing): optimizer
    moments and the step counter are reset, then ``epochs`` epochs run.
    """
    w = weights.copy()
    w.opt_m = None
    w.opt_v = None
    w.step = 0
    return train(w, config, new_set, None, replace(tc, epochs=epochs))
