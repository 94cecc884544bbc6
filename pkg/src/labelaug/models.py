"""Compact classifiers with a widened (class + augmentation-op) output head.

Two desk-scale architectures: ``mlp`` (flatten, one or more dense/relu
stages) and ``small_cnn`` (3x3 conv / relu / 2x2 max-pool stages).  The
output head always has ``num_classes + num_ops`` units; evaluation drops
the op logits before the softmax (``masked_class_prediction``), so with
``num_ops = 0`` everything reduces to a plain classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Tape, Tensor
from .errors import ShapeError, ValidationError

ARCHITECTURES = ("mlp", "small_cnn")


def _validate_common(cfg):
    if cfg.arch not in ARCHITECTURES:
        raise ValidationError(f"unknown arch {cfg.arch!r}; expected one of {ARCHITECTURES}")
    if len(cfg.input_shape) != 3 or any(int(s) < 1 for s in cfg.input_shape):
        raise ValidationError(f"input_shape must be (C, H, W), got {cfg.input_shape}")
    if cfg.num_classes < 2:
        raise ValidationError(f"num_classes must be >= 2, got {cfg.num_classes}")
    if cfg.num_ops < 0:
        raise ValidationError(f"num_ops must be >= 0, got {cfg.num_ops}")
    if cfg.arch == "mlp":
        if not cfg.hidden or any(int(h) < 1 for h in cfg.hidden):
            raise ValidationError(f"mlp hidden widths must be positive, got {cfg.hidden}")
    else:
        if not cfg.channels or any(int(c) < 1 for c in cfg.channels):
            raise ValidationError(f"cnn channel plan must be positive, got {cfg.channels}")
        _, h, w = cfg.input_shape
        div = 2 ** len(cfg.channels)
        if h % div or w % div:
            raise ValidationError(
                f"input {h}x{w} not divisible by the {len(cfg.channels)} pooling stages"
            )


@dataclass
class ModelConfig:
    """Architecture + head-width description for a single-head classifier."""

    arch: str
    input_shape: tuple[int, int, int]
    num_classes: int
    num_ops: int = 0
    hidden: tuple[int, ...] = (128,)
    channels: tuple[int, ...] = (16, 32)
    init_seed: int = 0

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.channels = tuple(int(c) for c in self.channels)
        _validate_common(self)

    @property
    def head_width(self) -> int:
        return self.num_classes + self.num_ops


@dataclass
class MtlModelConfig:
    """Shared trunk with separate class and op heads.

    The op head has ``num_ops + 1`` units: one per augmentation op plus a
    dedicated no-op class for untransformed samples.
    """

    arch: str
    input_shape: tuple[int, int, int]
    num_classes: int
    num_ops: int
    hidden: tuple[int, ...] = (128,)
    channels: tuple[int, ...] = (16, 32)
    init_seed: int = 0

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.channels = tuple(int(c) for c in self.channels)
        if self.num_ops < 1:
            raise ValidationError("multi-task config needs at least one augmentation op")
        _validate_common(self)

    @property
    def op_head_width(self) -> int:
        return self.num_ops + 1


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def _init_trunk(cfg, rng) -> tuple[dict, int]:
    """Initialize trunk parameters; returns (params, feature width)."""
    params: dict[str, np.ndarray] = {}
    c, h, w = cfg.input_shape
    if cfg.arch == "mlp":
        feat = c * h * w
        for i, width in enumerate(cfg.hidden):
            params[f"dense{i}.w"] = _he_uniform(rng, (feat, width), feat)
            params[f"dense{i}.b"] = np.zeros(width, dtype=np.float32)
            feat = width
    else:
        in_ch = c
        for i, out_ch in enumerate(cfg.channels):
            fan_in = in_ch * 9
            params[f"conv{i}.w"] = _he_uniform(rng, (out_ch, in_ch, 3, 3), fan_in)
            params[f"conv{i}.b"] = np.zeros(out_ch, dtype=np.float32)
            in_ch = out_ch
            h, w = h // 2, w // 2
        feat = in_ch * h * w
    return params, feat


def _init_head(rng, feat: int, width: int, name: str) -> dict:
    return {
        f"{name}.w": _he_uniform(rng, (feat, width), feat),
        f"{name}.b": np.zeros(width, dtype=np.float32),
    }


def _trunk_forward(cfg, params, x: Tensor) -> Tensor:
    n = x.shape[0]
    if cfg.arch == "mlp":
        out = engine.reshape(x, (n, int(np.prod(cfg.input_shape))))
        for i in range(len(cfg.hidden)):
            out = engine.matmul(out, params[f"dense{i}.w"])
            out = engine.bias_add(out, params[f"dense{i}.b"])
            out = engine.relu(out)
        return out
    out = x
    for i in range(len(cfg.channels)):
        out = engine.conv2d(out, params[f"conv{i}.w"], stride=1, pad=1)
        out = engine.bias_add(out, params[f"conv{i}.b"])
        out = engine.relu(out)
        out = engine.max_pool2d(out, 2)
    return engine.reshape(out, (n, out.data[0].size))


def _dense(params, name: str, x: Tensor) -> Tensor:
    return engine.bias_add(engine.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


class _BaseModel:
    def __init__(self, cfg):
        self.cfg = cfg

    @property
    def num_classes(self) -> int:
        return self.cfg.num_classes

    @property
    def num_ops(self) -> int:
        return self.cfg.num_ops

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def watched_params(self, tape: Tape) -> dict[str, Tensor]:
        """Wrap every parameter as a watched leaf on ``tape``."""
        return {name: tape.watch(Tensor(arr)) for name, arr in self.params.items()}

    def _check_batch(self, batch_shape):
        expected = self.cfg.input_shape
        if len(batch_shape) != 4 or tuple(batch_shape[1:]) != expected:
            raise ShapeError(f"batch shape {tuple(batch_shape)} does not match (N, {expected})")

    def _resolve(self, params):
        if params is None:
            return {name: Tensor(arr) for name, arr in self.params.items()}
        return params


class Model(_BaseModel):
    """Single-head classifier producing (K + M)-wide logits."""

    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg)
        rng = np.random.default_rng(cfg.init_seed)
        self.params, feat = _init_trunk(cfg, rng)
        self.params.update(_init_head(rng, feat, cfg.head_width, "head"))

    def forward(self, x: Tensor, params: dict[str, Tensor] | None = None) -> Tensor:
        """Differentiable logits; pass ``watched_params`` output to train."""
        self._check_batch(x.shape)
        p = self._resolve(params)
        return _dense(p, "head", _trunk_forward(self.cfg, p, x))

    def predict_logits(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Forward pass over a (N,C,H,W) array without recording a tape."""
        images = np.asarray(images, dtype=np.float32)
        self._check_batch(images.shape)
        parts = [self.forward(Tensor(images[i:i + batch_size])).data
                 for i in range(0, len(images), batch_size)]
        return np.concatenate(parts, axis=0)


class MtlModel(_BaseModel):
    """Shared trunk with a K-way class head and an (M+1)-way op head."""

    def __init__(self, cfg: MtlModelConfig):
        super().__init__(cfg)
        rng = np.random.default_rng(cfg.init_seed)
        self.params, feat = _init_trunk(cfg, rng)
        self.params.update(_init_head(rng, feat, cfg.num_classes, "head_a"))
        self.params.update(_init_head(rng, feat, cfg.op_head_width, "head_b"))

    def forward(self, x: Tensor, params: dict[str, Tensor] | None = None):
        self._check_batch(x.shape)
        p = self._resolve(params)
        trunk = _trunk_forward(self.cfg, p, x)
        return _dense(p, "head_a", trunk), _dense(p, "head_b", trunk)

    def predict_logits(self, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Class-head logits only; the op head plays no part in evaluation."""
        images = np.asarray(images, dtype=np.float32)
        self._check_batch(images.shape)
        parts = [self.forward(Tensor(images[i:i + batch_size]))[0].data
                 for i in range(0, len(images), batch_size)]
        return np.concatenate(parts, axis=0)


def build_model(cfg: ModelConfig) -> Model:
    return Model(cfg)


def build_mtl_model(cfg: MtlModelConfig) -> MtlModel:
    return MtlModel(cfg)


def forward_logits(model, batch) -> Tensor:
    """Differentiable logits for a batch (array or Tensor)."""
    x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=np.float32))
    out = model.forward(x)
    return out[0] if isinstance(out, tuple) else out


def masked_class_prediction(logits, num_classes: int):
    """Predictions that ignore the trailing op logits.

    The softmax runs over the FIRST ``num_classes`` logits only -- the op
    logits are dropped before, never after, normalization.  Returns
    ``(predicted class indices, (N, K) probabilities)``.
    """
    arr = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if arr.ndim != 2:
        raise ShapeError(f"masked_class_prediction: expected (N, K+M) logits, got {arr.shape}")
    k = int(num_classes)
    if k < 1:
        raise ValidationError(f"num_classes must be >= 1, got {k}")
    if k > arr.shape[1]:
        raise ValidationError(
            f"num_classes {k} exceeds logit width {arr.shape[1]}"
        )
    probs = engine.softmax_rows(arr[:, :k])
    return probs.argmax(axis=1), probs
