"""Parameter checkpoints (``N2SC``).

Layout, little-endian::

    magic "N2SC" | version u32 = 1
    | header_len u32 | header (UTF-8 JSON, may be empty)
    | count u32
    | count x (name_len u32 | name | rank u32 | dims u32[rank] | f64 payload)
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"N2SC"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray], header: dict | None = None) -> None:
    blob = json.dumps(header, sort_keys=True).encode("utf-8") if header is not None else b""
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(blob)), blob,
             struct.pack("<I", len(params))]
    for name, value in params.items():
        raw = name.encode("utf-8")
        value = np.asarray(value, dtype="<f8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{value.ndim}I", value.ndim, *value.shape))
        parts.append(np.ascontiguousarray(value).tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[dict | None, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, raw, pos)
        pos += size
        return out

    def take_bytes(size):
        nonlocal pos
        if pos + size > len(raw):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = raw[pos:pos + size]
        pos += size
        return out

    if take_bytes(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, header_len = take("<II")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    blob = take_bytes(header_len)
    header = json.loads(blob) if blob else None
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = take_bytes(name_len).decode("utf-8")
        (rank,) = take("<I")
        dims = take(f"<{rank}I")
        size = int(np.prod(dims, dtype=np.int64))
        params[name] = np.frombuffer(take_bytes(8 * size), dtype="<f8").reshape(dims).copy()
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return header, params
