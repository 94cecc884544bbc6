"""Label-preserving image augmentations and the corruption operators.

Images are (C, H, W) float arrays in [0, 1]; every operation returns a
fresh clamped buffer and never touches labels.  Given the same (op,
params, seed) the output is identical, so the whole pipeline can be
parallelized with per-image derived seeds.

Training augmentations: gamma adjustment, Planckian jitter (blackbody
white-point gains), plasma noise (a diamond-square fractal blend), plus
the flip/crop preprocessing applied before any of them.  The benchmark
corruptions are severity-parameterized by a versioned table shipped with
the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ValidationError

OP_IDS = ("identity", "plasma", "planckian_jitter", "gamma")
TRAINABLE_OPS = ("plasma", "planckian_jitter", "gamma")
CORRUPTION_IDS = ("gaussian_noise", "shot_noise", "impulse_noise", "box_blur",
                  "brightness", "contrast", "pixelate")

GAMMA_RANGE = (0.5, 2.0)
TEMPERATURE_RANGE = (3000.0, 15000.0)
REFERENCE_TEMPERATURE = 6500.0
PLASMA_ROUGHNESS = 0.5
PLASMA_ALPHA_RANGE = (0.2, 0.6)
IDENTITY_PROB = 0.5


def _as_rng(seed_or_rng) -> np.random.Generator:
    # integers become fresh generators; generator-likes (including test
    # stubs with the right draw methods) pass straight through
    if isinstance(seed_or_rng, (int, np.integer)) or seed_or_rng is None:
        return np.random.default_rng(seed_or_rng)
    return seed_or_rng


def _check_image(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 3:
        raise ValidationError(f"image must be (C, H, W), got shape {arr.shape}")
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValidationError("image values must lie in [0, 1]")
    return arr


def _clamp(arr: np.ndarray) -> np.ndarray:
    return np.clip(arr, 0.0, 1.0)


# ---------------------------------------------------------------------------
# gamma adjustment
# ---------------------------------------------------------------------------

def apply_gamma(img, gamma: float) -> np.ndarray:
    """Per-pixel power curve out = in ** gamma."""
    img = _check_image(img)
    gamma = float(gamma)
    if not GAMMA_RANGE[0] <= gamma <= GAMMA_RANGE[1]:
        raise ValidationError(f"gamma {gamma} outside configured range {GAMMA_RANGE}")
    return _clamp(img ** gamma)


# ---------------------------------------------------------------------------
# Planckian jitter
# ---------------------------------------------------------------------------

def _planckian_chromaticity(temperature: float) -> tuple[float, float]:
    # cubic fit of the Planckian locus in CIE 1931 xy (Kim et al. style
    # piecewise polynomials in 10^3/T)
    u = 1e3 / temperature
    if temperature < 4000.0:
        x = ((-0.2661239 * u - 0.2343589) * u + 0.8776956) * u + 0.179910
    else:
        x = ((-3.0258469 * u + 2.1070379) * u + 0.2226347) * u + 0.240390
    if temperature < 2222.0:
        y = ((-1.1063814 * x - 1.34811020) * x + 2.18555832) * x - 0.20219683
    elif temperature < 4000.0:
        y = ((-0.9549476 * x - 1.37418593) * x + 2.09137015) * x - 0.16748867
    else:
        y = ((3.0817580 * x - 5.87338670) * x + 3.75112997) * x - 0.37001483
    return x, y


def _linear_srgb_white(temperature: float) -> tuple[float, float, float]:
    x, y = _planckian_chromaticity(temperature)
    big_x = x / y
    big_z = (1.0 - x - y) / y
    r = 3.2404542 * big_x - 1.5371385 - 0.4985314 * big_z
    g = -0.9692660 * big_x + 1.8760108 + 0.0415560 * big_z
    b = 0.0556434 * big_x - 0.2040259 + 1.0572252 * big_z
    return r, g, b


def planckian_gains(temperature: float,
                    reference: float = REFERENCE_TEMPERATURE) -> tuple[float, float, float]:
    """Channel gains for a blackbody white point, g-normalized.

    Gains are taken relative to the white point at ``reference``, so the
    reference temperature maps to exactly (1, 1, 1).
    """
    r, g, b = _linear_srgb_white(temperature)
    r0, g0, b0 = _linear_srgb_white(reference)
    rr, gg, bb = r / r0, g / g0, b / b0
    return rr / gg, 1.0, bb / gg


def apply_planckian_jitter(img, temperature: float,
                           reference: float = REFERENCE_TEMPERATURE) -> np.ndarray:
    """Multiply RGB channels by the white-point gains of ``temperature``."""
    img = _check_image(img)
    if img.shape[0] != 3:
        raise ValidationError(f"planckian jitter expects 3 channels, got {img.shape[0]}")
    temperature = float(temperature)
    if not TEMPERATURE_RANGE[0] <= temperature <= TEMPERATURE_RANGE[1]:
        raise ValidationError(
            f"temperature {temperature} outside configured range {TEMPERATURE_RANGE}"
        )
    gains = np.array(planckian_gains(temperature, reference), dtype=img.dtype)
    return _clamp(img * gains[:, None, None])


# ---------------------------------------------------------------------------
# plasma noise (diamond-square fractal)
# ---------------------------------------------------------------------------

def _next_pow2_plus1(n: int) -> int:
    side = 2
    while side + 1 < n:
        side *= 2
    return side + 1


def diamond_square_field(size: int, roughness: float, rng) -> np.ndarray:
    """Fractal field on a (2^n + 1) square grid, min-max normalized to [0, 1].

    Corners are drawn from U(0, 1); the displacement at subdivision level L
    (0-indexed) is drawn from U(-1, 1) and scaled by roughness ** L.  Draw
    order is fixed: corners, then per level the diamond centers in row-major
    order followed by the square midpoints row by row.
    """
    if size < 3 or (size - 1) & (size - 2):
        raise ValidationError(f"grid side must be 2^n + 1 with n >= 1, got {size}")
    rng = _as_rng(rng)
    grid = np.zeros((size, size), dtype=np.float64)
    corners = rng.uniform(0.0, 1.0, 4)
    grid[0, 0], grid[0, -1], grid[-1, 0], grid[-1, -1] = corners

    step = size - 1
    disp = 1.0
    while step > 1:
        half = step // 2
        # diamond step: square centers get the mean of their four corners
        tl = grid[0:size - step:step, 0:size - step:step]
        tr = grid[0:size - step:step, step::step]
        bl = grid[step::step, 0:size - step:step]
        br = grid[step::step, step::step]
        noise = rng.uniform(-1.0, 1.0, tl.shape)
        grid[half::step, half::step] = (tl + tr + bl + br) * 0.25 + noise * disp
        # square step: edge midpoints get the mean of their in-bounds
        # orthogonal neighbors at distance ``half``
        for r in range(0, size, half):
            cols = np.arange(half, size, step) if r % step == 0 else np.arange(0, size, step)
            total = np.zeros(len(cols))
            count = np.zeros(len(cols))
            if r - half >= 0:
                total += grid[r - half, cols]
                count += 1
            if r + half < size:
                total += grid[r + half, cols]
                count += 1
            left = cols - half >= 0
            total[left] += grid[r, cols[left] - half]
            count[left] += 1
            right = cols + half < size
            total[right] += grid[r, cols[right] + half]
            count[right] += 1
            noise = rng.uniform(-1.0, 1.0, len(cols))
            grid[r, cols] = total / count + noise * disp
        step = half
        disp *= roughness

    lo, hi = grid.min(), grid.max()
    if hi > lo:
        return (grid - lo) / (hi - lo)
    return np.full_like(grid, 0.5)


def apply_plasma(img, roughness: float = PLASMA_ROUGHNESS, alpha: float = 0.5,
                 seed=0) -> np.ndarray:
    """Blend a seeded fractal field into the image: (1-alpha)*img + alpha*field."""
    img = _check_image(img)
    roughness, alpha = float(roughness), float(alpha)
    if not 0.0 < roughness <= 1.0:
        raise ValidationError(f"roughness {roughness} outside (0, 1]")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha {alpha} outside [0, 1]")
    if alpha == 0.0:
        return img.copy()
    _, h, w = img.shape
    side = _next_pow2_plus1(max(h, w))
    fld = diamond_square_field(side, roughness, _as_rng(seed))[:h, :w]
    return _clamp((1.0 - alpha) * img + alpha * fld.astype(img.dtype))


# ---------------------------------------------------------------------------
# flip / crop preprocessing
# ---------------------------------------------------------------------------

def flip_horizontal(img) -> np.ndarray:
    img = _check_image(img)
    return img[:, :, ::-1].copy()


def pad_reflect(img, pad: int) -> np.ndarray:
    img = _check_image(img)
    if pad >= min(img.shape[1], img.shape[2]):
        raise ValidationError(f"reflect pad {pad} too large for image {img.shape}")
    return np.pad(img, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")


def crop(img, top: int, left: int, height: int, width: int) -> np.ndarray:
    arr = np.asarray(img)
    if top < 0 or left < 0 or top + height > arr.shape[1] or left + width > arr.shape[2]:
        raise ValidationError(
            f"crop {height}x{width}@({top},{left}) exceeds image {arr.shape}"
        )
    return arr[:, top:top + height, left:left + width].copy()


def preprocess_flip_crop(img, seed, pad: int = 4) -> np.ndarray:
    """Random horizontal flip (p = 0.5), reflect-pad, then crop back to size."""
    img = _check_image(img)
    rng = _as_rng(seed)
    _, h, w = img.shape
    out = img
    if rng.uniform() < 0.5:
        out = flip_horizontal(out)
    padded = pad_reflect(out, pad)
    top = int(rng.integers(0, 2 * pad + 1))
    left = int(rng.integers(0, 2 * pad + 1))
    return crop(padded, top, left, h, w)


# ---------------------------------------------------------------------------
# corruption benchmark operators
# ---------------------------------------------------------------------------

_SEVERITY_TABLE: dict[str, list[float]] | None = None
_SEVERITY_VERSION: int | None = None


def severity_table() -> dict[str, list[float]]:
    """Parse (once) the versioned severity parameter table shipped with the repo."""
    global _SEVERITY_TABLE, _SEVERITY_VERSION
    if _SEVERITY_TABLE is None:
        table: dict[str, list[float]] = {}
        version = None
        text = resources.files("labelaug").joinpath("data/corruption_severity.txt").read_text()
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key == "version":
                version = int(value)
                continue
            values = [float(v) for v in value.split(",")]
            if len(values) != 5:
                raise ValidationError(f"severity table row {key!r} must have 5 entries")
            table[key.split(".")[0]] = values
        if version is None or set(table) != set(CORRUPTION_IDS):
            raise ValidationError("severity table is missing a version or a corruption row")
        _SEVERITY_TABLE, _SEVERITY_VERSION = table, version
    return _SEVERITY_TABLE


def severity_table_version() -> int:
    severity_table()
    return _SEVERITY_VERSION


@dataclass
class CorruptionSpec:
    corruption_id: str
    severity: int

    def __post_init__(self):
        if self.corruption_id not in CORRUPTION_IDS:
            raise ValidationError(
                f"unknown corruption {self.corruption_id!r}; expected one of {CORRUPTION_IDS}"
            )
        if not 1 <= int(self.severity) <= 5:
            raise ValidationError(f"severity {self.severity} outside 1..5")
        self.severity = int(self.severity)

    @property
    def parameter(self) -> float:
        return severity_table()[self.corruption_id][self.severity - 1]


def _box_blur_once(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    h, w = img.shape[1], img.shape[2]
    total = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            total += padded[:, dy:dy + h, dx:dx + w]
    return total / 9.0


def _pixelate(img: np.ndarray, scale: float) -> np.ndarray:
    _, h, w = img.shape
    h2 = max(1, int(round(h * scale)))
    w2 = max(1, int(round(w * scale)))
    rows = (np.arange(h2) * h) // h2
    cols = (np.arange(w2) * w) // w2
    small = img[:, rows][:, :, cols]
    back_rows = (np.arange(h) * h2) // h
    back_cols = (np.arange(w) * w2) // w
    return small[:, back_rows][:, :, back_cols]


def apply_corruption(img, spec: CorruptionSpec, seed) -> np.ndarray:
    """Apply one severity-parameterized corruption, deterministic under seed."""
    img = _check_image(img)
    rng = _as_rng(seed)
    p = spec.parameter
    cid = spec.corruption_id
    if cid == "gaussian_noise":
        out = img + rng.normal(0.0, p, img.shape)
    elif cid == "shot_noise":
        out = rng.poisson(img * p) / p
    elif cid == "impulse_noise":
        u = rng.uniform(size=img.shape[1:])
        out = img.copy()
        out[:, u < p / 2] = 1.0
        out[:, u > 1.0 - p / 2] = 0.0
    elif cid == "box_blur":
        out = img
        for _ in range(int(p)):
            out = _box_blur_once(out)
    elif cid == "brightness":
        out = img + p
    elif cid == "contrast":
        mean = img.mean(axis=(1, 2), keepdims=True)
        out = (img - mean) * p + mean
    elif cid == "pixelate":
        out = _pixelate(img, p)
    else:  # pragma: no cover - guarded by CorruptionSpec
        raise ValidationError(f"unknown corruption {cid!r}")
    return _clamp(out.astype(img.dtype, copy=False))


# ---------------------------------------------------------------------------
# op descriptors and training-time sampling
# ---------------------------------------------------------------------------

@dataclass
class AugOpDescriptor:
    """Identity + parameters + RNG seed for one augmentation application."""

    op_id: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.op_id not in OP_IDS:
            raise ValidationError(f"unknown op {self.op_id!r}; expected one of {OP_IDS}")
        if self.op_id == "identity" and self.params:
            raise ValidationError("identity op carries no parameters")


def apply_op(img, desc: AugOpDescriptor) -> np.ndarray:
    if desc.op_id == "identity":
        return _check_image(img).copy()
    if desc.op_id == "gamma":
        return apply_gamma(img, desc.params["gamma"])
    if desc.op_id == "planckian_jitter":
        return apply_planckian_jitter(img, desc.params["temperature"])
    return apply_plasma(img, desc.params["roughness"], desc.params["alpha"], desc.seed)


def sample_op_params(rng, op_id: str, seed: int = 0) -> AugOpDescriptor:
    """Draw this op's parameters from the configured training ranges."""
    rng = _as_rng(rng)
    if op_id == "gamma":
        return AugOpDescriptor("gamma", {"gamma": float(rng.uniform(*GAMMA_RANGE))}, seed)
    if op_id == "planckian_jitter":
        return AugOpDescriptor(
            "planckian_jitter", {"temperature": float(rng.uniform(*TEMPERATURE_RANGE))}, seed
        )
    if op_id == "plasma":
        return AugOpDescriptor(
            "plasma",
            {"roughness": PLASMA_ROUGHNESS, "alpha": float(rng.uniform(*PLASMA_ALPHA_RANGE))},
            int(rng.integers(0, 2 ** 63)),
        )
    raise ValidationError(f"op {op_id!r} is not samplable")


def sample_training_op(rng, op_names, identity_prob: float = IDENTITY_PROB):
    """Per-sample policy: identity with probability ``identity_prob``,
    otherwise one of the configured ops uniformly.

    Returns ``(op_index, descriptor)`` with ``op_index=None`` for identity.
    """
    rng = _as_rng(rng)
    for name in op_names:
        if name not in TRAINABLE_OPS:
            raise ValidationError(f"op {name!r} cannot be used for training augmentation")
    if not op_names or rng.uniform() < identity_prob:
        return None, AugOpDescriptor("identity")
    j = int(rng.integers(0, len(op_names)))
    return j, sample_op_params(rng, op_names[j])
