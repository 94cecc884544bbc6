"""The optimization recipe and the training-regime dispatcher.

SGD with momentum under a per-step cosine-annealed learning rate drives
six regimes: plain supervised training, augmentation-aware labels,
smoothed labels, multi-task class/op heads, and the two adversarial
baselines.  All randomness derives from the config seed plus (epoch,
sample index), so a rerun reproduces the exact weight trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import augment, engine
from .attacks import AttackConfig, run_attack
from .data_io import Dataset, batches, derived_rng, derived_seed
from .engine import Tape, Tensor
from .errors import ValidationError
from .labels import (make_la_label, make_ls_label, make_mtl_target, onehot_matrix,
                     sample_delta)
from .models import MtlModel, MtlModelConfig, build_model, build_mtl_model, \
    masked_class_prediction

REGIMES = ("standard", "la", "ls", "mtl", "adv_fgsm", "adv_pgd")
DELTA_MODES = ("per_sample", "per_batch")

# seed-derivation stream tags
_BATCH_STREAM = 1
_SAMPLE_STREAM = 2
_ATTACK_STREAM = 3
_DELTA_STREAM = 4


def cosine_lr(step: int, total: int, lr0: float, eta_min: float) -> float:
    """Closed-form annealingrate: lr0 at step 0 down to eta_min at ``total``."""
    if total < 1:
        raise ValidationError(f"total steps must be >= 1, got {total}")
    if not 0 <= step <= total:
        raise ValidationError(f"step {step} outside [0, {total}]")
    if step == 0:
        return lr0
    if step == total:
        return eta_min
    return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + math.cos(math.pi * step / total))


def sgd_momentum_step(param: np.ndarray, grad: np.ndarray, velocity: np.ndarray,
                      lr: float, momentum: float = 0.9):
    """One heavy-ball update: v <- mu*v + g, p <- p - lr*v."""
    if param.shape != grad.shape or param.shape != velocity.shape:
        raise ValidationError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"velocity {velocity.shape}"
        )
    velocity = momentum * velocity + grad
    return param - lr * velocity, velocity


class SgdMomentum:
    """Momentum SGD over a named parameter dict; velocity persists across steps."""

    def __init__(self, momentum: float = 0.9):
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> None:
        for name, param in params.items():
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(param)
            params[name], self.velocity[name] = sgd_momentum_step(
                param, grads[name], v, lr, self.momentum
            )


@dataclass
class TrainConfig:
    regime: str
    epochs: int = 25
    batch_size: int = 128
    lr0: float = 0.1
    eta_min: Optional[float] = None       # defaults to 1e-4 * lr0
    momentum: float = 0.9
    seed: int = 0
    ops: tuple[str, ...] = ()             # op list order defines the label index
    identity_prob: float = augment.IDENTITY_PROB
    delta_low: float = 0.05
    delta_high: float = 0.1
    delta_mode: str = "per_sample"
    attack: Optional[AttackConfig] = None  # adversarial regimes only

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValidationError(f"unknown regime {self.regime!r}; expected {REGIMES}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eta_min is None:
            self.eta_min = 1e-4 * self.lr0
        if not self.lr0 > self.eta_min >= 0:
            raise ValidationError(f"need lr0 > eta_min >= 0, got {self.lr0}, {self.eta_min}")
        if self.delta_mode not in DELTA_MODES:
            raise ValidationError(f"unknown delta_mode {self.delta_mode!r}")
        if not 0.0 <= self.delta_low <= self.delta_high < 1.0:
            raise ValidationError(
                f"delta range [{self.delta_low}, {self.delta_high}] invalid"
            )
        if not 0.0 <= self.identity_prob <= 1.0:
            raise ValidationError(f"identity_prob {self.identity_prob} outside [0, 1]")
        self.ops = tuple(self.ops)
        if self.regime == "adv_fgsm" and self.attack is None:
            self.attack = AttackConfig("fgsm", epsilon=0.3)
        if self.regime == "adv_pgd" and self.attack is None:
            self.attack = AttackConfig("pgd", epsilon=0.3, steps=10, random_start=True)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    train_accuracy: float
    lr: float


def _sample_delta_for(cfg: TrainConfig, rng) -> float:
    return sample_delta(rng, cfg.delta_low, cfg.delta_high)


def _check_consistency(cfg: TrainConfig, model_cfg, ds: Dataset):
    wants_mtl = cfg.regime == "mtl"
    if wants_mtl != isinstance(model_cfg, MtlModelConfig):
        raise ValidationError(
            f"regime {cfg.regime!r} is incompatible with {type(model_cfg).__name__}"
        )
    if model_cfg.num_classes != ds.class_count:
        raise ValidationError(
            f"model expects {model_cfg.num_classes} classes, dataset has {ds.class_count}"
        )
    if cfg.regime in ("la", "mtl") and len(cfg.ops) != model_cfg.num_ops:
        raise ValidationError(
            f"{len(cfg.ops)} configured ops but the model reserves {model_cfg.num_ops} op slots"
        )


def _augment_batch(cfg: TrainConfig, model_cfg, batch, epoch: int):
    """Flip/crop every sample, then apply the regime's augmentation policy.

    Returns (images, class targets, op targets or None, delta weights or None).
    Augmented buffers are fresh; the dataset is never written to.
    """
    k = model_cfg.num_classes
    m = model_cfg.num_ops
    n = len(batch.indices)
    images = np.empty_like(batch.images)

    if cfg.regime == "la":
        targets = np.empty((n, k + m), dtype=np.float64)
    elif cfg.regime == "ls":
        targets = np.zeros((n, k + m), dtype=np.float64)
    elif cfg.regime == "mtl":
        targets = np.empty((n, k), dtype=np.float64)
        op_targets = np.empty((n, m + 1), dtype=np.float64)
        deltas = np.empty(n, dtype=np.float64)
    else:
        targets = onehot_matrix(batch.labels, k, m)

    batch_delta = None
    if cfg.delta_mode == "per_batch" and cfg.ops and cfg.regime in ("la", "ls", "mtl"):
        batch_rng = derived_rng(cfg.seed, _DELTA_STREAM, epoch, int(batch.indices[0]))
        batch_delta = _sample_delta_for(cfg, batch_rng)

    for i in range(n):
        rng = derived_rng(cfg.seed, _SAMPLE_STREAM, epoch, int(batch.indices[i]))
        img = augment.preprocess_flip_crop(batch.images[i], rng)
        y = int(batch.labels[i])
        if cfg.regime == "la":
            j, desc = augment.sample_training_op(rng, cfg.ops, cfg.identity_prob)
            if j is None:
                targets[i] = make_la_label(k, m, y, None, 0.0).values
            else:
                img = augment.apply_op(img, desc)
                delta = batch_delta if batch_delta is not None else _sample_delta_for(cfg, rng)
                targets[i] = make_la_label(k, m, y, j, delta).values
        elif cfg.regime == "ls":
            delta = batch_delta if batch_delta is not None else _sample_delta_for(cfg, rng)
            targets[i, :k] = make_ls_label(k, y, delta).values
        elif cfg.regime == "mtl":
            j, desc = augment.sample_training_op(rng, cfg.ops, cfg.identity_prob)
            if j is None:
                delta = 0.0
            else:
                img = augment.apply_op(img, desc)
                delta = batch_delta if batch_delta is not None else _sample_delta_for(cfg, rng)
            target = make_mtl_target(k, m, y, j, delta)
            targets[i] = target.class_onehot
            op_targets[i] = target.op_onehot
            deltas[i] = delta
        images[i] = img

    if cfg.regime == "mtl":
        return images, targets, op_targets, deltas
    return images, targets, None, None


def _supervised_step(model, images, targets, optimizer: SgdMomentum, lr: float,
                     op_targets=None, deltas=None):
    """Forward, backward, and one optimizer step; returns (loss, class logits)."""
    tape = Tape()
    watched = model.watched_params(tape)
    if isinstance(model, MtlModel):
        logits_a, logits_b = model.forward(Tensor(images), watched)
        loss_a = engine.softmax_cross_entropy(logits_a, targets, sample_weights=1.0 - deltas)
        loss_b = engine.softmax_cross_entropy(logits_b, op_targets, sample_weights=deltas)
        loss = engine.add(loss_a, loss_b)
        class_logits = logits_a.data
    else:
        logits = model.forward(Tensor(images), watched)
        loss = engine.softmax_cross_entropy(logits, targets)
        class_logits = logits.data
    engine.backward(loss, list(watched.values()))
    optimizer.step(model.params, {name: watched[name].grad for name in watched}, lr)
    return float(loss.data), class_logits


def train(cfg: TrainConfig, model_cfg, ds: Dataset, epoch_callback=None):
    """Run one training regime to completion.

    Returns ``(model, per-epoch stats)``.  Identical configs and seeds give
    bit-identical final weights.  ``epoch_callback(stats, model)`` fires
    after every epoch (periodic checkpointing hooks in here).
    """
    _check_consistency(cfg, model_cfg, ds)
    model = build_mtl_model(model_cfg) if cfg.regime == "mtl" else build_model(model_cfg)
    optimizer = SgdMomentum(cfg.momentum)
    steps_per_epoch = math.ceil(len(ds) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    k = model_cfg.num_classes

    log: list[EpochStats] = []
    step = 0
    for epoch in range(cfg.epochs):
        epoch_rng = derived_rng(cfg.seed, _BATCH_STREAM, epoch)
        loss_sum = 0.0
        correct = 0
        lr = cfg.lr0
        for batch in batches(ds, cfg.batch_size, epoch_rng):
            lr = cosine_lr(step, total_steps, cfg.lr0, cfg.eta_min)
            images, targets, op_targets, deltas = _augment_batch(cfg, model_cfg, batch, epoch)
            if cfg.regime in ("adv_fgsm", "adv_pgd"):
                attack_seed = derived_seed(cfg.seed, _ATTACK_STREAM, epoch, step)
                images = run_attack(model, images, batch.labels, cfg.attack,
                                    attack_seed).examples
            loss, class_logits = _supervised_step(
                model, images, targets, optimizer, lr, op_targets, deltas
            )
            preds, _ = masked_class_prediction(class_logits, k)
            correct += int(np.count_nonzero(preds == batch.labels))
            loss_sum += loss * len(batch.indices)
            step += 1
        log.append(EpochStats(epoch, loss_sum / len(ds), correct / len(ds), lr))
        if epoch_callback is not None:
            epoch_callback(log[-1], model)
    return model, log


def epoch_log_rows(log: list[EpochStats]) -> list[list]:
    header = ["epoch", "mean_loss", "train_accuracy", "lr"]
    rows = [[s.epoch, repr(s.mean_loss), repr(s.train_accuracy), repr(s.lr)] for s in log]
    return [header] + rows
