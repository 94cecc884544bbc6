"""Dataset ingestion, deterministic subsetting/batching, and synthetic data.

Reads the standard CIFAR binary archives (user-supplied ``.bin`` files,
never downloaded).  Pixels map to [0, 1] as byte/255 with no mean/std
normalization, so attack budgets act directly on pixel scale.  The
synthetic shape dataset gives tests a download-free, desk-learnable task.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import DataError, ValidationError

CIFAR_VARIANTS = {"cifar10": (3073, 0, 10), "cifar100_fine": (3074, 1, 100)}
SHAPE_CLASS_NAMES = ("disk", "square", "cross", "ring", "triangle", "saltire",
                     "stripes", "checker")


def derived_rng(*entropy: int) -> np.random.Generator:
    """A generator seeded by a stable hash of the given integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(e) for e in entropy])))


def derived_seed(*entropy: int) -> int:
    """A single stable integer seed derived from the given integers."""
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1)[0])


@dataclass
class Dataset:
    """Images (N, C, H, W) in [0, 1] with integer class labels."""

    images: np.ndarray
    labels: np.ndarray
    class_count: int
    split: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.labels) != len(self.images):
            raise ValidationError(
                f"dataset shapes inconsistent: {self.images.shape} images, "
                f"{self.labels.shape} labels"
            )
        if len(self.images) == 0:
            raise ValidationError("dataset is empty")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ValidationError(f"labels out of range for {self.class_count} classes")

    def __len__(self) -> int:
        return len(self.images)


def load_cifar_binary(path, variant: str = "cifar10") -> Dataset:
    """Parse one uncompressed CIFAR ``.bin`` file.

    cifar10 records are 1 label byte + 3072 pixel bytes (row-major R, G, B
    planes); cifar100 records carry a coarse then a fine label byte.
    """
    if variant not in CIFAR_VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}; expected {tuple(CIFAR_VARIANTS)}")
    record_size, label_offset, class_count = CIFAR_VARIANTS[variant]
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read dataset file {path}: {e}") from e
    if len(blob) == 0 or len(blob) % record_size:
        raise DataError(
            f"{path}: {len(blob)} bytes is not a whole number of {record_size}-byte records"
        )
    records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, record_size)
    labels = records[:, label_offset].astype(np.int64)
    if labels.max() >= class_count:
        raise DataError(f"{path}: label {labels.max()} out of range for {variant}")
    pixels = records[:, label_offset + 1:].reshape(-1, 3, 32, 32)
    images = pixels.astype(np.float32) / 255.0
    return Dataset(images, labels, class_count, split=path.stem)


def concat_datasets(datasets: list[Dataset]) -> Dataset:
    if not datasets:
        raise DataError("no dataset files given")
    class_count = datasets[0].class_count
    if any(d.class_count != class_count for d in datasets):
        raise DataError("cannot concatenate datasets with different class counts")
    return Dataset(
        np.concatenate([d.images for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        class_count,
        split=datasets[0].split,
    )


def subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """Class-stratified sample of ``n`` items; per-class counts differ by <= 1."""
    n = int(n)
    if n > len(ds):
        raise ValidationError(f"subset size {n} exceeds dataset size {len(ds)}")
    if n < ds.class_count:
        raise ValidationError(f"subset size {n} cannot stratify {ds.class_count} classes")
    rng = derived_rng(seed)
    base, extra = divmod(n, ds.class_count)
    picks = []
    for c in range(ds.class_count):
        quota = base + (1 if c < extra else 0)
        members = np.flatnonzero(ds.labels == c)
        if len(members) < quota:
            raise DataError(f"class {c} has {len(members)} samples, needs {quota}")
        picks.append(members[rng.permutation(len(members))[:quota]])
    chosen = np.concatenate(picks)
    chosen = chosen[rng.permutation(len(chosen))]
    return Dataset(ds.images[chosen], ds.labels[chosen], ds.class_count, split=ds.split)


def _shape_mask(kind: str, cx: int, cy: int, r: int) -> np.ndarray:
    yy, xx = np.mgrid[0:32, 0:32]
    dx, dy = xx - cx, yy - cy
    if kind == "disk":
        return dx * dx + dy * dy <= r * r
    if kind == "square":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if kind == "cross":
        return ((np.abs(dx) <= 1) & (np.abs(dy) <= r)) | ((np.abs(dy) <= 1) & (np.abs(dx) <= r))
    if kind == "ring":
        d2 = dx * dx + dy * dy
        inner = max(1, r - 3)
        return (d2 <= r * r) & (d2 >= inner * inner)
    if kind == "triangle":
        return (dy >= -r) & (dy <= r) & (2 * np.abs(dx) <= dy + r)
    if kind == "saltire":
        return (np.abs(np.abs(dx) - np.abs(dy)) <= 1) & (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if kind == "stripes":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r) & (dy % 3 == 0)
    return (np.abs(dx) <= r) & (np.abs(dy) <= r) & ((dx // 3 + dy // 3) % 2 == 0)


def synthesize_shapes(n: int, class_count: int = 4, seed: int = 0) -> Dataset:
    """Procedural 32x32 shape classification with color/position jitter."""
    if not 2 <= class_count <= len(SHAPE_CLASS_NAMES):
        raise ValidationError(
            f"class_count must be in [2, {len(SHAPE_CLASS_NAMES)}], got {class_count}"
        )
    if n < class_count:
        raise ValidationError(f"need at least {class_count} samples, got {n}")
    rng = derived_rng(seed)
    images = np.empty((n, 3, 32, 32), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        label = i % class_count
        background = rng.uniform(0.0, 0.25, (3, 32, 32))
        color = rng.uniform(0.55, 1.0, 3)
        cx = 16 + int(rng.integers(-5, 6))
        cy = 16 + int(rng.integers(-5, 6))
        r = int(rng.integers(6, 10))
        mask = _shape_mask(SHAPE_CLASS_NAMES[label], cx, cy, r)
        img = background
        img[:, mask] = color[:, None]
        images[i] = img
        labels[i] = label
    return Dataset(images, labels, class_count, split="synthetic")


class Batch(NamedTuple):
    indices: np.ndarray
    images: np.ndarray
    labels: np.ndarray


def batches(ds: Dataset, batch_size: int, shuffle_seed) -> Iterator[Batch]:
    """Deterministically shuffled batches; the last partial batch is kept.

    ``indices`` are positions in ``ds``, for deriving per-sample seeds.
    """
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    rng = shuffle_seed if isinstance(shuffle_seed, np.random.Generator) \
        else derived_rng(shuffle_seed)
    order = rng.permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = order[start:start + batch_size]
        yield Batch(idx, ds.images[idx], ds.labels[idx])
