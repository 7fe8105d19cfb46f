"""Binary parameter checkpoints.

Layout: the magic string "SODETR1", then one record per named parameter:
a length-prefixed UTF-8 name (u32 LE), the shape rank (u32 LE), the dims
(u32 LE each), and the raw little-endian float64 data. Records run to EOF;
parameter order is the store's registration order.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import ParamStore

MAGIC = b"SODETR1"


class CheckpointError(ValueError):
    pass


def save_params(path: str | Path, store: ParamStore) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        for name, tensor in store.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            arr = np.ascontiguousarray(tensor.data, dtype="<f8")
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def read_arrays(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    pos = len(MAGIC)
    out: dict[str, np.ndarray] = {}
    while pos < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(dims)
        pos += 8 * count
        out[name] = arr.astype(np.float64)
    return out


def load_params(path: str | Path, store: ParamStore) -> None:
    """Fill an existing store in place; names and shapes must match exactly."""
    arrays = read_arrays(path)
    missing = set(store.params) - set(arrays)
    extra = set(arrays) - set(store.params)
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter names do not match the model "
            f"(missing={sorted(missing)[:3]}, extra={sorted(extra)[:3]})")
    for name, tensor in store.items():
        arr = arrays[name]
        if arr.shape != tensor.data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name}: {arr.shape} vs {tensor.data.shape}")
        tensor.data = arr.copy()
