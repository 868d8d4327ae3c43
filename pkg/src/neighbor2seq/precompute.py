"""Hop-aggregated sequence features.

For every node ``i`` and hop ``l`` the sequence slot is the walk-count
weighted feature sum ``z[i, l] = sum_j (A+I)^l[i, j] x[j]``.  It is produced
by ``l`` repeated sparse-dense products with the unnormalized adjacency;
no dense power of the adjacency is ever formed.

Sequence files (``N2SQ``) are little-endian::

    magic "N2SQ" | version u32 = 1 | n u64 | L u32 | d u32 | f64[n][L+1][d]
"""
from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .graph import FeatureMatrix, Graph

log = logging.getLogger(__name__)

SEQUENCE_MAGIC = b"N2SQ"
SEQUENCE_VERSION = 1
_SEQ_HEADER = struct.Struct("<4sIQII")

MAX_HOPS = 16
OVERFLOW_GUARD = 1e300
ORACLE_MAX_NODES = 2000


class PrecomputeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SequenceTensor:
    """``values[i, l]`` is the hop-``l`` aggregate of node ``i``."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def L(self) -> int:
        return self.values.shape[1] - 1

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def gather(self, idx: np.ndarray) -> np.ndarray:
        """Return a contiguous (B, L+1, d) copy of the rows in ``idx``.

        Works for in-memory arrays and memory-mapped files alike.
        """
        idx = np.asarray(idx, dtype=np.int64)
        if isinstance(self.values, np.memmap):
            order = np.argsort(idx, kind="stable")
            out = np.empty((idx.size,) + self.values.shape[1:], dtype=np.float64)
            out[order] = self.values[idx[order]]
            return out
        return self.values[idx]


@numba.njit(parallel=True, cache=True)
def _spmm_rows(offsets, cols, dense, out, start, stop):
    d = dense.shape[1]
    for r in numba.prange(stop - start):
        i = start + r
        for f in range(d):
            out[r, f] = 0.0
        for p in range(offsets[i], offsets[i + 1]):
            j = cols[p]
            for f in range(d):
                out[r, f] += dense[j, f]


@numba.njit(parallel=True, cache=True)
def _spmm_hop(offsets, cols, prev, cur, seq, hop):
    # same accumulation order as _spmm_rows; also writes each row into its
    # sequence slot so no separate strided copy is needed
    d = prev.shape[1]
    for i in numba.prange(prev.shape[0]):
        for f in range(d):
            cur[i, f] = 0.0
        for p in range(offsets[i], offsets[i + 1]):
            j = cols[p]
            for f in range(d):
                cur[i, f] += prev[j, f]
        for f in range(d):
            seq[i, hop, f] = cur[i, f]


def set_threads(n: int | None) -> None:
    """Cap worker threads for the sparse kernels; results do not depend on it."""
    limit = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(min(n, limit) if n else limit)


def spmm(g: Graph, dense: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Multiply the binary adjacency of ``g`` by a dense (n, d) matrix.

    Each output row is accumulated over its columns in ascending order, so
    the result is bit-identical for any thread count or row chunking.
    """
    if not g.has_self_loops:
        raise ValueError("spmm expects a graph with self-loops")
    dense = np.ascontiguousarray(dense, dtype=np.float64)
    if dense.ndim != 2 or dense.shape[0] != g.n:
        raise ValueError(f"dense operand has shape {dense.shape}, expected ({g.n}, d)")
    if out is None:
        out = np.empty_like(dense)
    _spmm_rows(g.row_offsets, g.col_indices, dense, out, 0, g.n)
    return out


def _check_inputs(g: Graph, x: FeatureMatrix | np.ndarray, L: int) -> np.ndarray:
    values = x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)
    if not g.has_self_loops:
        raise ValueError("neighbor2seq expects a graph with self-loops")
    if values.shape[0] != g.n:
        raise ValueError(f"feature rows ({values.shape[0]}) != graph nodes ({g.n})")
    if not 0 <= L <= MAX_HOPS:
        raise ValueError(f"hops must be in [0, {MAX_HOPS}], got {L}")
    return np.ascontiguousarray(values, dtype=np.float64)


def _guard(z: np.ndarray, hop: int) -> None:
    # NaN and inf both propagate through the max, so one pass covers both checks
    peak = float(np.max(np.abs(z))) if z.size else 0.0
    if not np.isfinite(peak):
        raise PrecomputeError(f"non-finite values at hop {hop}; walk counts overflowed f64")
    if peak > OVERFLOW_GUARD * 1e-8:
        log.warning("hop %d: magnitude %.3g is approaching the f64 overflow guard", hop, peak)


def neighbor2seq(g: Graph, x: FeatureMatrix | np.ndarray, L: int) -> SequenceTensor:
    """Compute all ``L+1`` sequence slots with exactly ``L`` sparse products."""
    values = _check_inputs(g, x, L)
    n, d = values.shape
    out = np.empty((n, L + 1, d), dtype=np.float64)
    out[:, 0] = values
    prev, cur = values.copy(), np.empty_like(values)
    for hop in range(1, L + 1):
        _spmm_hop(g.row_offsets, g.col_indices, prev, cur, out, hop)
        _guard(cur, hop)
        prev, cur = cur, prev
    return SequenceTensor(out)


def neighbor2seq_chunked(g: Graph, x: FeatureMatrix | np.ndarray, L: int,
                         chunk_rows: int, out_path) -> None:
    """Stream the sequence tensor to an ``N2SQ`` file.

    Hop ``l`` is produced ``chunk_rows`` output rows at a time from the full
    hop ``l-1`` buffer; each finished chunk is scattered into the file.  Only
    two full (n, d) buffers plus one (chunk_rows, d) block are held.
    """
    if chunk_rows < 1:
        raise ValueError("chunk_rows must be a positive integer")
    values = _check_inputs(g, x, L)
    n, d = values.shape
    path = Path(out_path)
    with open(path, "wb") as fh:
        fh.write(_SEQ_HEADER.pack(SEQUENCE_MAGIC, SEQUENCE_VERSION, n, L, d))
        fh.truncate(_SEQ_HEADER.size + 8 * n * (L + 1) * d)
    mm = np.memmap(path, dtype="<f8", mode="r+", offset=_SEQ_HEADER.size, shape=(n, L + 1, d))
    try:
        mm[:, 0] = values
        prev = values.copy()
        cur = np.empty_like(prev)
        block = np.empty((min(chunk_rows, n), d), dtype=np.float64)
        for hop in range(1, L + 1):
            for start in range(0, n, chunk_rows):
                stop = min(start + chunk_rows, n)
                blk = block[: stop - start]
                _spmm_rows(g.row_offsets, g.col_indices, prev, blk, start, stop)
                cur[start:stop] = blk
                mm[start:stop, hop] = blk
            _guard(cur, hop)
            prev, cur = cur, prev
        mm.flush()
    finally:
        del mm


def walk_count_oracle(g: Graph, length: int) -> np.ndarray:
    """Exact ``(A+I)^length`` by repeated dense integer multiplication.

    Test-only.  Uses int64 while the walk-count bound ``(max_degree)^length``
    fits, otherwise Python integers.
    """
    if g.n > ORACLE_MAX_NODES:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_NODES}")
    if length < 0:
        raise ValueError("walk length must be non-negative")
    a = g.to_dense()
    max_deg = int(g.degrees().max()) if g.n else 0
    if length == 0 or max_deg <= 1 or length * np.log2(max_deg) < 62:
        dtype = np.int64
    else:
        dtype = object
    result = np.eye(g.n, dtype=np.int64).astype(dtype)
    a = a.astype(dtype)
    for _ in range(length):
        result = result @ a
    return result


def walk_count_enumerate(g: Graph, length: int) -> np.ndarray:
    """Count walks by explicit depth-first enumeration (tiny graphs only)."""
    counts = np.zeros((g.n, g.n), dtype=np.int64)

    def walk(start, node, remaining):
        if remaining == 0:
            counts[start, node] += 1
            return
        for nxt in g.row(node):
            walk(start, int(nxt), remaining - 1)

    for i in range(g.n):
        walk(i, i, length)
    return counts


def save_sequence(seq: SequenceTensor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_SEQ_HEADER.pack(SEQUENCE_MAGIC, SEQUENCE_VERSION, seq.n, seq.L, seq.d))
        fh.write(np.ascontiguousarray(seq.values, dtype="<f8").tobytes())


def read_sequence_header(path) -> tuple[int, int, int]:
    with open(path, "rb") as fh:
        head = fh.read(_SEQ_HEADER.size)
    if len(head) < _SEQ_HEADER.size:
        raise PrecomputeError(f"{path}: file shorter than sequence header")
    magic, version, n, L, d = _SEQ_HEADER.unpack(head)
    if magic != SEQUENCE_MAGIC:
        raise PrecomputeError(f"{path}: bad magic {magic!r}, expected {SEQUENCE_MAGIC!r}")
    if version != SEQUENCE_VERSION:
        raise PrecomputeError(f"{path}: unsupported version {version}")
    return n, L, d


def load_sequence(path, mmap: bool = False) -> SequenceTensor:
    """Load an ``N2SQ`` file; ``mmap=True`` keeps the payload on disk."""
    n, L, d = read_sequence_header(path)
    expected = _SEQ_HEADER.size + 8 * n * (L + 1) * d
    actual = os.path.getsize(path)
    if actual != expected:
        raise PrecomputeError(f"{path}: expected {expected} bytes, found {actual}")
    if mmap:
        values = np.memmap(path, dtype="<f8", mode="r", offset=_SEQ_HEADER.size,
                           shape=(n, L + 1, d))
    else:
        values = np.fromfile(path, dtype="<f8", offset=_SEQ_HEADER.size).reshape(n, L + 1, d)
    return SequenceTensor(values)
