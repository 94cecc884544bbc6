"""Gradient-sign adversarial attacks under an L-infinity budget.

Both the single-step attack and its iterated, projected variant perturb
inputs along the sign of the input gradient of a cross-entropy loss
against the true class.  By default the loss looks only at the first K
logits (the classifier actually used at test time); ``full_km`` switches
to the whole widened head.

Every returned example lies inside the epsilon ball around its original
and inside [0, 1]; both bounds hold exactly, not just up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import engine
from .data_io import derived_rng
from .engine import Tape, Tensor
from .errors import ValidationError
from .labels import onehot_matrix

ATTACK_FAMILIES = ("fgsm", "pgd")
LOGIT_MODES = ("masked_k", "full_km")


@dataclass
class AttackConfig:
    family: str
    epsilon: float
    steps: int = 1
    step_size: Optional[float] = None   # defaults to epsilon / 4
    random_start: bool = False
    logit_mode: str = "masked_k"

    def __post_init__(self):
        if self.family not in ATTACK_FAMILIES:
            raise ValidationError(f"unknown attack {self.family!r}; expected {ATTACK_FAMILIES}")
        if self.logit_mode not in LOGIT_MODES:
            raise ValidationError(f"unknown logit mode {self.logit_mode!r}")
        self.epsilon = float(self.epsilon)
        if self.epsilon < 0:
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")
        self.steps = int(self.steps)
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if self.family == "fgsm" and self.steps != 1:
            raise ValidationError("fgsm is single-step; use pgd for iterated attacks")
        if self.step_size is not None:
            self.step_size = float(self.step_size)
            if self.step_size <= 0:
                raise ValidationError(f"step size must be > 0, got {self.step_size}")

    @property
    def resolved_step_size(self) -> float:
        return self.step_size if self.step_size is not None else self.epsilon / 4.0


@dataclass
class AttackResult:
    examples: np.ndarray
    zero_gradient: bool = False   # diagnostic: every gradient was identically zero


def input_gradient(model, images: np.ndarray, class_labels: np.ndarray,
                   logit_mode: str = "masked_k") -> np.ndarray:
    """Gradient of the attack loss with respect to the input batch.

    Parameters stay unwatched, so no gradient flows into the model.
    """
    tape = Tape()
    xt = tape.watch(Tensor(images))
    logits = model.forward(xt)
    if isinstance(logits, tuple):
        logits = logits[0]
    k = model.num_classes
    if logit_mode == "masked_k":
        if logits.shape[1] > k:
            logits = engine.slice_cols(logits, 0, k)
        targets = onehot_matrix(class_labels, k)
    else:
        targets = onehot_matrix(class_labels, k, logits.shape[1] - k)
    loss = engine.softmax_cross_entropy(logits, targets)
    engine.backward(loss, [xt])
    return xt.grad


def _enforce_linf_ball(x_adv: np.ndarray, x0: np.ndarray, eps: float) -> np.ndarray:
    # float32 stepping can land a ulp past the budget; nudge offenders back
    # toward x0 until max|x' - x| <= eps holds exactly, measured in float64
    wide0 = x0.astype(np.float64)
    while True:
        over = np.abs(x_adv.astype(np.float64) - wide0) > eps
        if not over.any():
            return x_adv
        x_adv[over] = np.nextafter(x_adv[over], x0[over])


def fgsm(model, images: np.ndarray, class_labels: np.ndarray,
         cfg: AttackConfig) -> AttackResult:
    """Single signed-gradient step of size epsilon, clamped to [0, 1]."""
    x0 = np.asarray(images, dtype=np.float32)
    grad = input_gradient(model, x0, class_labels, cfg.logit_mode)
    degenerate = not bool(np.any(grad))
    x_adv = np.clip(x0 + cfg.epsilon * np.sign(grad), 0.0, 1.0)
    return AttackResult(_enforce_linf_ball(x_adv, x0, cfg.epsilon), degenerate)


def pgd(model, images: np.ndarray, class_labels: np.ndarray,
        cfg: AttackConfig, seed: int = 0) -> AttackResult:
    """Iterated signed-gradient attack, re-projected onto the ball each step.

    With ``random_start`` the iterate begins at a uniform point of the
    epsilon ball (seeded, so the attack stays deterministic).
    """
    x0 = np.asarray(images, dtype=np.float32)
    eps = cfg.epsilon
    alpha = cfg.resolved_step_size
    if eps > 0 and alpha <= 0:
        raise ValidationError(f"pgd step size must be > 0, got {alpha}")
    if cfg.random_start and eps > 0:
        delta = derived_rng(seed).uniform(-eps, eps, x0.shape).astype(np.float32)
    else:
        delta = np.zeros_like(x0)
    degenerate = True
    for _ in range(cfg.steps):
        # every iterate the gradient sees satisfies both bounds exactly
        x_eval = _enforce_linf_ball(np.clip(x0 + delta, 0.0, 1.0), x0, eps)
        grad = input_gradient(model, x_eval, class_labels, cfg.logit_mode)
        degenerate = degenerate and not bool(np.any(grad))
        delta = np.clip(delta + alpha * np.sign(grad), -eps, eps)
    x_adv = np.clip(x0 + delta, 0.0, 1.0)
    return AttackResult(_enforce_linf_ball(x_adv, x0, eps), degenerate)


def run_attack(model, images, class_labels, cfg: AttackConfig, seed: int = 0) -> AttackResult:
    if cfg.family == "fgsm":
        return fgsm(model, images, class_labels, cfg)
    return pgd(model, images, class_labels, cfg, seed)


def adversarial_training_step(model, images, class_labels, cfg: AttackConfig,
                              optimizer, lr: float, seed: int = 0) -> float:
    """One supervised step on adversarial examples of the current weights.

    Example generation runs against frozen parameters (no gradient flows
    into it); the subsequent update uses plain widened one-hot targets.
    """
    adv = run_attack(model, images, class_labels, cfg, seed).examples
    targets = onehot_matrix(class_labels, model.num_classes, model.num_ops)
    tape = Tape()
    watched = model.watched_params(tape)
    logits = model.forward(Tensor(adv), watched)
    loss = engine.softmax_cross_entropy(logits, targets)
    engine.backward(loss, list(watched.values()))
    optimizer.step(model.params, {name: watched[name].grad for name in watched}, lr)
    return float(loss.data)
