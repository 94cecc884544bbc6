"""Portable weight checkpoints.

Flat binary container: magic ``LAKT``, u32 version, u32 tensor count, then
per-tensor records of name length (u32), utf-8 name, rank (u32), extents
(u32 each), and row-major float32 little-endian values.  Round-trips are
bit-exact for float32 arrays.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"LAKT"
VERSION = 1


def save_weights(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named arrays in insertion order; values are stored as float32."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_weights(path) -> dict[str, np.ndarray]:
    """Read a container back into an ordered name -> float32 array mapping."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e

    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise DataError(f"checkpoint {path} is truncated at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise DataError(f"{path} is not a weight checkpoint (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        values = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape)
        tensors[name] = values.copy()
    if pos != len(view):
        raise DataError(f"{path}: {len(view) - pos} trailing bytes after last record")
    return tensors
