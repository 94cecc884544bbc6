"""Training-target construction for the four regimes under comparison.

* augmented labels: class one-hot scaled by 1-delta concatenated with the
  op one-hot scaled by delta (identity samples keep delta = 0),
* smoothed labels: the classic weighted average with a uniform vector,
* multi-task targets: separate class / op one-hots with (1-delta, delta)
  task weights, identity mapped to a dedicated no-op class.

All functions are pure and parallel-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError

DELTA_LOW = 0.05
DELTA_HIGH = 0.1


def _check_class_index(i: int, num_classes: int):
    if not 0 <= i < num_classes:
        raise ValidationError(f"class index {i} out of range for {num_classes} classes")


@dataclass
class AugmentedLabel:
    """Length-(K+M) probability vector with at most two nonzero entries."""

    values: np.ndarray
    class_index: int
    op_index: Optional[int]
    delta: float

    def __post_init__(self):
        s = float(self.values.sum())
        if abs(s - 1.0) > 1e-9:
            raise ValidationError(f"augmented label sums to {s!r}, expected 1")


@dataclass
class SmoothedLabel:
    values: np.ndarray
    class_index: int
    delta: float


@dataclass
class MtlTarget:
    class_onehot: np.ndarray
    op_onehot: np.ndarray
    task_weights: tuple[float, float]


def make_la_label(num_classes: int, num_ops: int, class_index: int,
                  op_index: Optional[int], delta: float) -> AugmentedLabel:
    """Build the augmented target vector.

    Layout: class labels at positions 0..K-1, op labels at K..K+M-1.  A
    transformed sample puts 1-delta at ``class_index`` and delta at
    ``K + op_index``; the identity case (``op_index=None``) must carry
    delta = 0 and reduces to the widened one-hot.
    """
    _check_class_index(class_index, num_classes)
    delta = float(delta)
    if not 0.0 <= delta < 1.0:
        raise ValidationError(f"delta {delta} outside [0, 1)")
    values = np.zeros(num_classes + num_ops, dtype=np.float64)
    if op_index is None:
        if delta != 0.0:
            raise ValidationError(f"identity transformation requires delta = 0, got {delta}")
        values[class_index] = 1.0
    else:
        if not 0 <= op_index < num_ops:
            raise ValidationError(f"op index {op_index} out of range for {num_ops} ops")
        values[class_index] = 1.0 - delta
        values[num_classes + op_index] = delta
    return AugmentedLabel(values, class_index, op_index, delta)


def sample_delta(rng: np.random.Generator, low: float = DELTA_LOW,
                 high: float = DELTA_HIGH) -> float:
    """Draw the label-mixing factor uniformly from [low, high)."""
    return float(rng.uniform(low, high))


def make_ls_label(num_classes: int, class_index: int, delta: float) -> SmoothedLabel:
    """Smoothed target: (1-delta) * one-hot + delta * uniform."""
    _check_class_index(class_index, num_classes)
    delta = float(delta)
    if not 0.0 <= delta < 1.0:
        raise ValidationError(f"delta {delta} outside [0, 1)")
    values = np.full(num_classes, delta / num_classes, dtype=np.float64)
    values[class_index] += 1.0 - delta
    return SmoothedLabel(values, class_index, delta)


def make_mtl_target(num_classes: int, num_ops: int, class_index: int,
                    op_index: Optional[int], delta: float) -> MtlTarget:
    """Two-head target; the combined loss is (1-delta)*CE_class + delta*CE_op.

    ``op_index=None`` selects the dedicated no-op class (index ``num_ops``
    of the M+1-wide op head).
    """
    _check_class_index(class_index, num_classes)
    delta = float(delta)
    if not 0.0 <= delta < 1.0:
        raise ValidationError(f"delta {delta} outside [0, 1)")
    if op_index is not None and not 0 <= op_index < num_ops:
        raise ValidationError(f"op index {op_index} out of range for {num_ops} ops")
    class_onehot = np.zeros(num_classes, dtype=np.float64)
    class_onehot[class_index] = 1.0
    op_onehot = np.zeros(num_ops + 1, dtype=np.float64)
    op_onehot[num_ops if op_index is None else op_index] = 1.0
    return MtlTarget(class_onehot, op_onehot, (1.0 - delta, delta))


def onehot_matrix(class_indices, num_classes: int, num_ops: int = 0) -> np.ndarray:
    """Widened one-hot rows: class indices over K with M trailing zero slots."""
    idx = np.asarray(class_indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= num_classes):
        raise ValidationError(f"class indices out of range for {num_classes} classes")
    out = np.zeros((len(idx), num_classes + num_ops), dtype=np.float64)
    out[np.arange(len(idx)), idx] = 1.0
    return out


def recover_la_label(values: np.ndarray, num_classes: int):
    """Invert ``make_la_label``: returns (class_index, op_index, delta)."""
    values = np.asarray(values)
    class_index = int(values[:num_classes].argmax())
    tail = values[num_classes:]
    delta = float(tail.sum())
    op_index = int(tail.argmax()) if tail.size and tail.max() > 0 else None
    return class_index, op_index, delta
