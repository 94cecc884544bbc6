"""scikit-learn style front end: a trainable classifier plus image transformers.

``RobustImageClassifier`` wraps the training regimes behind the familiar
``fit`` / ``predict`` / ``predict_proba`` surface, so the whole toolkit
drops into pipelines, grid searches, and cross-validation untouched.  The
augmentation and corruption operators are exposed as stateless
transformers over (N, C, H, W) batches.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import augment
from .attacks import AttackConfig, run_attack
from .errors import ValidationError
from .models import MtlModelConfig, ModelConfig, masked_class_prediction
from .training import TrainConfig, train


def check_image_batch(X, channels: int | None = None) -> np.ndarray:
    """Validate a batch of images: 4-d float array with values in [0, 1]."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4:
        raise ValidationError(f"expected a (N, C, H, W) batch, got shape {X.shape}")
    if channels is not None and X.shape[1] != channels:
        raise ValidationError(f"expected {channels} channels, got {X.shape[1]}")
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValidationError("image values must lie in [0, 1]")
    return X


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n:
        raise ValidationError(f"expected {n} labels in a 1-d array, got shape {y.shape}")
    return y


class RobustImageClassifier(BaseEstimator, ClassifierMixin):
    """Image classifier trained under one of the robust-training regimes.

    Parameters mirror the experiment config: ``regime`` selects plain,
    augmentation-aware-label, smoothed-label, multi-task, or adversarial
    training; ``ops`` lists the augmentations (their order fixes the op
    label indices).  ``predict`` always applies the evaluation-time
    masking rule, so op logits never influence the returned classes.
    """

    def __init__(self, regime="la", arch="small_cnn",
                 ops=("plasma", "planckian_jitter", "gamma"),
                 epochs=10, batch_size=128, lr0=0.1, eta_min_factor=1e-4,
                 momentum=0.9, identity_prob=0.5, delta_low=0.05, delta_high=0.1,
                 delta_mode="per_sample", hidden=(128,), channels=(16, 32),
                 attack=None, seed=0):
        self.regime = regime
        self.arch = arch
        self.ops = ops
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr0 = lr0
        self.eta_min_factor = eta_min_factor
        self.momentum = momentum
        self.identity_prob = identity_prob
        self.delta_low = delta_low
        self.delta_high = delta_high
        self.delta_mode = delta_mode
        self.hidden = hidden
        self.channels = channels
        self.attack = attack
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        attack = self.attack
        if attack is not None and not isinstance(attack, AttackConfig):
            attack = AttackConfig(**attack)
        return TrainConfig(
            regime=self.regime, epochs=self.epochs, batch_size=self.batch_size,
            lr0=self.lr0, eta_min=self.eta_min_factor * self.lr0,
            momentum=self.momentum, seed=self.seed, ops=tuple(self.ops or ()),
            identity_prob=self.identity_prob, delta_low=self.delta_low,
            delta_high=self.delta_high, delta_mode=self.delta_mode, attack=attack,
        )

    def fit(self, X, y):
        from .data_io import Dataset

        X = check_image_batch(X)
        y = check_labels(y, len(X))
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValidationError("need at least two classes to fit")
        encoded = np.searchsorted(self.classes_, y)
        ds = Dataset(X, encoded, len(self.classes_), split="fit")

        common = dict(arch=self.arch, input_shape=X.shape[1:],
                      num_classes=len(self.classes_), num_ops=len(self.ops or ()),
                      hidden=tuple(self.hidden), channels=tuple(self.channels),
                      init_seed=self.seed)
        cfg = MtlModelConfig(**common) if self.regime == "mtl" else ModelConfig(**common)
        self.model_, self.history_ = train(self._train_config(), cfg, ds)
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict")

    def predict_proba(self, X) -> np.ndarray:
        self._require_fitted()
        X = check_image_batch(X)
        logits = self.model_.predict_logits(X)
        _, probs = masked_class_prediction(logits, len(self.classes_))
        return probs

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]

    def perturb(self, X, y, family="fgsm", epsilon=0.03, steps=40,
                step_size=None, random_start=True, seed=0) -> np.ndarray:
        """Adversarial examples against the fitted classifier."""
        self._require_fitted()
        X = check_image_batch(X)
        y = check_labels(y, len(X))
        encoded = np.searchsorted(self.classes_, y)
        cfg = AttackConfig(family, epsilon, steps=steps if family == "pgd" else 1,
                           step_size=step_size,
                           random_start=random_start and family == "pgd")
        return run_attack(self.model_, X, encoded, cfg, seed).examples


class _ImageTransformer(BaseEstimator, TransformerMixin):
    """Stateless per-image transformer over (N, C, H, W) batches."""

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        X = check_image_batch(X)
        return np.stack([self._apply(X[i], i) for i in range(len(X))])


class GammaAdjust(_ImageTransformer):
    def __init__(self, gamma=1.0):
        self.gamma = gamma

    def _apply(self, img, i):
        return augment.apply_gamma(img, self.gamma)


class PlanckianJitter(_ImageTransformer):
    def __init__(self, temperature=augment.REFERENCE_TEMPERATURE):
        self.temperature = temperature

    def _apply(self, img, i):
        return augment.apply_planckian_jitter(img, self.temperature)


class PlasmaNoise(_ImageTransformer):
    def __init__(self, roughness=augment.PLASMA_ROUGHNESS, alpha=0.5, seed=0):
        self.roughness = roughness
        self.alpha = alpha
        self.seed = seed

    def _apply(self, img, i):
        from .data_io import derived_seed

        return augment.apply_plasma(img, self.roughness, self.alpha,
                                    derived_seed(self.seed, i))


class RandomFlipCrop(_ImageTransformer):
    def __init__(self, pad=4, seed=0):
        self.pad = pad
        self.seed = seed

    def _apply(self, img, i):
        from .data_io import derived_seed

        return augment.preprocess_flip_crop(img, derived_seed(self.seed, i), self.pad)


class Corruptor(_ImageTransformer):
    def __init__(self, corruption="gaussian_noise", severity=3, seed=0):
        self.corruption = corruption
        self.severity = severity
        self.seed = seed

    def _apply(self, img, i):
        from .data_io import derived_seed

        spec = augment.CorruptionSpec(self.corruption, self.severity)
        return augment.apply_corruption(img, spec, derived_seed(self.seed, i))
