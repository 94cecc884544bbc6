"""Robust-training toolkit: augmentation-aware labels, adversarial attacks,
a regenerable corruption benchmark, and calibration metrics."""

__version__ = "0.1.0"

from .attacks import AttackConfig, AttackResult, fgsm, pgd, run_attack
from .augment import (AugOpDescriptor, CorruptionSpec, apply_corruption, apply_gamma,
                      apply_planckian_jitter, apply_plasma, preprocess_flip_crop)
from .data_io import Dataset, batches, load_cifar_binary, subset, synthesize_shapes
from .engine import Tape, Tensor, backward
from .errors import (ConfigError, DataError, DomainError, LabelAugError, ShapeError,
                     TapeError, ValidationError)
from .estimators import (Corruptor, GammaAdjust, PlanckianJitter, PlasmaNoise,
                         RandomFlipCrop, RobustImageClassifier)
from .labels import (AugmentedLabel, MtlTarget, SmoothedLabel, make_la_label,
                     make_ls_label, make_mtl_target, sample_delta)
from .metrics import (EvalReport, PredictionRecord, calibration_errors,
                      corruption_errors, error_rate)
from .models import (Model, ModelConfig, MtlModel, MtlModelConfig, build_model,
                     build_mtl_model, forward_logits, masked_class_prediction)
from .training import EpochStats, SgdMomentum, TrainConfig, cosine_lr, \
    sgd_momentum_step, train

__all__ = [
    "AttackConfig", "AttackResult", "fgsm", "pgd", "run_attack",
    "AugOpDescriptor", "CorruptionSpec", "apply_corruption", "apply_gamma",
    "apply_planckian_jitter", "apply_plasma", "preprocess_flip_crop",
    "Dataset", "batches", "load_cifar_binary", "subset", "synthesize_shapes",
    "Tape", "Tensor", "backward",
    "ConfigError", "DataError", "DomainError", "LabelAugError", "ShapeError",
    "TapeError", "ValidationError",
    "Corruptor", "GammaAdjust", "PlanckianJitter", "PlasmaNoise",
    "RandomFlipCrop", "RobustImageClassifier",
    "AugmentedLabel", "MtlTarget", "SmoothedLabel", "make_la_label",
    "make_ls_label", "make_mtl_target", "sample_delta",
    "EvalReport", "PredictionRecord", "calibration_errors", "corruption_errors",
    "error_rate",
    "Model", "ModelConfig", "MtlModel", "MtlModelConfig", "build_model",
    "build_mtl_model", "forward_logits", "masked_class_prediction",
    "EpochStats", "SgdMomentum", "TrainConfig", "cosine_lr", "sgd_momentum_step",
    "train",
]
