"""Binary checkpoint format for named float64 tensors.

Layout (all integers little-endian u32):

    magic   b"DLAB"
    version u32
    count   u32
    then per tensor, sorted by name:
        name_len u32, name utf-8 bytes
        rank     u32, dims u32 * rank
        payload  float64 little-endian, row-major

Deterministic: the same tensor dict always serializes to identical bytes.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import EncodingError

MAGIC = b"DLAB"
VERSION = 1


def save_tensors(path: str | Path, tensors: dict[str, Tensor]) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        data = np.ascontiguousarray(tensors[name].data, dtype=np.float64)
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", data.ndim))
        for d in data.shape:
            parts.append(struct.pack("<I", d))
        parts.append(data.astype("<f8").tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def load_arrays(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise EncodingError(f"{path}: not a DLAB checkpoint")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise EncodingError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", raw, off)
            off += 4
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", raw, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", raw, off) if rank else ()
            off += 4 * rank
            n = 1
            for d in dims:
                n *= d
            arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(dims)
            off += 8 * n
            out[name] = arr.astype(np.float64).copy()
    except (struct.error, ValueError) as e:
        raise EncodingError(f"{path}: truncated or corrupt checkpoint ({e})") from e
    if off != len(raw):
        raise EncodingError(f"{path}: {len(raw) - off} trailing bytes")
    return out


def load_into(path: str | Path, tensors: dict[str, Tensor]) -> None:
    """Load a checkpoint into existing tensors, checking names and shapes."""
    arrays = load_arrays(path)
    missing = set(tensors) - set(arrays)
    extra = set(arrays) - set(tensors)
    if missing or extra:
        raise EncodingError(
            f"{path}: tensor names mismatch (missing={sorted(missing)[:4]}, "
            f"extra={sorted(extra)[:4]})"
        )
    for name, t in tensors.items():
        arr = arrays[name]
        if arr.shape != t.data.shape:
            raise EncodingError(
                f"{path}: {name} has shape {arr.shape}, expected {t.data.shape}"
            )
        t.data = arr
