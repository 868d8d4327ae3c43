"""Graphs, node features, labels and splits.

Graphs are stored as symmetric binary CSR matrices.  The three node-level
inputs (features, labels, splits) use a small little-endian binary layout:

    magic (4 bytes) | version u32 = 1 | dim0 u32 | dim1 u32 | payload

* features ``N2SF``: dims (n, d), row-major f64 payload
* labels   ``N2SL``: dims (n, C); u32 class per node, or, when the top bit
  of C is set, a multi-label row-major u8 0/1 matrix
* splits   ``N2SS``: dims (n, 3), then three u32-length-prefixed u32 arrays
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")

FEATURE_MAGIC = b"N2SF"
LABEL_MAGIC = b"N2SL"
SPLIT_MAGIC = b"N2SS"


class GraphFormatError(ValueError):
    """Raised when an input file is malformed or violates an invariant."""


@dataclass(frozen=True)
class Graph:
    """Symmetric, unweighted CSR adjacency.

    ``m`` counts directed slots, so an undirected edge contributes two and
    a self-loop one.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    has_self_loops: bool = False

    def __post_init__(self):
        self.row_offsets.setflags(write=False)
        self.col_indices.setflags(write=False)

    @property
    def m(self) -> int:
        return int(self.row_offsets[-1])

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def row(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def edges(self) -> np.ndarray:
        """Return all directed slots as an (m, 2) array of (row, col)."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees())
        return np.stack([rows, self.col_indices.astype(np.int64)], axis=1)

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int64)
        e = self.edges()
        a[e[:, 0], e[:, 1]] = 1
        return a

    def validate(self) -> None:
        """Check every structural invariant; raise GraphFormatError on failure."""
        off, col = self.row_offsets, self.col_indices
        if off.shape != (self.n + 1,) or off[0] != 0 or off[-1] != col.size:
            raise GraphFormatError("row_offsets must have n+1 entries from 0 to m")
        if np.any(np.diff(off) < 0):
            raise GraphFormatError("row_offsets must be non-decreasing")
        if col.size and (col.min() < 0 or col.max() >= self.n):
            raise GraphFormatError("column index out of range")
        e = self.edges()
        same_row = e[1:, 0] == e[:-1, 0]
        if np.any(same_row & (col[1:] <= col[:-1])):
            raise GraphFormatError("columns must be strictly increasing within a row")
        if self.has_self_loops:
            loops = np.bincount(e[e[:, 0] == e[:, 1], 0], minlength=self.n)
            if np.any(loops != 1):
                raise GraphFormatError("every row needs exactly one self-loop")
        if not is_symmetric(self):
            raise GraphFormatError("adjacency is not symmetric")


def is_symmetric(g: Graph) -> bool:
    e = g.edges()
    key = e[:, 0] * g.n + e[:, 1]
    tkey = np.sort(e[:, 1] * g.n + e[:, 0])
    return bool(np.array_equal(key, tkey))


def from_edges(n: int, src: Iterable[int], dst: Iterable[int]) -> Graph:
    """Build a symmetrized, deduplicated graph without self-loops.

    Self-loop pairs in the input are dropped; use :func:`add_self_loops`.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
        raise GraphFormatError(f"node id out of range [0, {n})")
    keep = src != dst
    src, dst = src[keep], dst[keep]
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    key = np.unique(rows * n + cols)
    rows, cols = key // n, key % n
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return Graph(n, offsets, cols.astype(np.int64), has_self_loops=False)


def add_self_loops(g: Graph) -> Graph:
    """Return ``A + I`` with each loop in its sorted slot."""
    if g.has_self_loops:
        raise GraphFormatError("graph already has self-loops")
    e = g.edges()
    diag = np.arange(g.n, dtype=np.int64)
    key = np.sort(np.concatenate([e[:, 0] * g.n + e[:, 1], diag * g.n + diag]))
    rows, cols = key // g.n, key % g.n
    offsets = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=g.n), out=offsets[1:])
    return Graph(g.n, offsets, cols, has_self_loops=True)


def restrict_to_nodes(g: Graph, nodes: np.ndarray) -> Graph:
    """Keep only edges whose endpoints both lie in ``nodes``; ids are unchanged.

    Used for inductive runs, where training sequences come from the
    train-only subgraph.
    """
    keep_node = np.zeros(g.n, dtype=bool)
    keep_node[np.asarray(nodes, dtype=np.int64)] = True
    e = g.edges()
    e = e[keep_node[e[:, 0]] & keep_node[e[:, 1]] & (e[:, 0] != e[:, 1])]
    out = from_edges(g.n, e[:, 0], e[:, 1])
    return add_self_loops(out) if g.has_self_loops else out


def permute(g: Graph, perm: np.ndarray) -> Graph:
    """Relabel node ``i`` as ``perm[i]``."""
    perm = np.asarray(perm, dtype=np.int64)
    e = g.edges()
    e = e[e[:, 0] != e[:, 1]]
    out = from_edges(g.n, perm[e[:, 0]], perm[e[:, 1]])
    return add_self_loops(out) if g.has_self_loops else out


def load_edge_list(path, n: int) -> Graph:
    """Read a ``src dst`` edge list (whitespace or comma separated)."""
    src, dst = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            try:
                if len(parts) != 2:
                    raise ValueError
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: cannot parse edge {line!r}") from None
            if not (0 <= a < n and 0 <= b < n):
                raise GraphFormatError(f"{path}:{lineno}: node id out of range [0, {n})")
            src.append(a)
            dst.append(b)
    if not src:
        raise GraphFormatError("empty edge set")
    return from_edges(n, src, dst)


def write_edge_list(g: Graph, path) -> None:
    """Write each undirected non-loop edge once as ``i j`` with ``i < j``."""
    e = g.edges()
    e = e[e[:, 0] < e[:, 1]]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n}\n")
        for a, b in e:
            fh.write(f"{a} {b}\n")


# --- node features -------------------------------------------------------

@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise GraphFormatError("features must be a 2-D array")
        if not np.all(np.isfinite(self.values)):
            raise GraphFormatError("feature values must be finite (found NaN/Inf)")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _read_header(raw: bytes, magic: bytes, path) -> tuple[int, int]:
    if len(raw) < _HEADER.size:
        raise GraphFormatError(f"{path}: file shorter than header")
    got, version, a, b = _HEADER.unpack_from(raw)
    if got != magic:
        raise GraphFormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise GraphFormatError(f"{path}: unsupported version {version}")
    return a, b


def _check_size(raw: bytes, expected: int, path) -> None:
    if len(raw) != expected:
        raise GraphFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")


def save_features(x: FeatureMatrix | np.ndarray, path) -> None:
    values = x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)
    n, d = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, n, d))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_features(path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    n, d = _read_header(raw, FEATURE_MAGIC, path)
    _check_size(raw, _HEADER.size + 8 * n * d, path)
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, d)
    return FeatureMatrix(values.astype(np.float64))


# --- labels --------------------------------------------------------------

@dataclass(frozen=True)
class LabelSet:
    """Single-label targets are an int array of shape (n,); multi-label
    targets are a 0/1 uint8 array of shape (n, num_classes)."""

    kind: str
    num_classes: int
    targets: np.ndarray

    def __post_init__(self):
        if self.kind not in ("single-label", "multi-label"):
            raise GraphFormatError(f"unknown label kind {self.kind!r}")
        if self.num_classes < 1:
            raise GraphFormatError("num_classes must be positive")
        t = self.targets
        if self.kind == "single-label":
            if t.ndim != 1:
                raise GraphFormatError("single-label targets must be 1-D")
            if t.size and (t.min() < 0 or t.max() >= self.num_classes):
                raise GraphFormatError("label out of range")
        else:
            if t.ndim != 2 or t.shape[1] != self.num_classes:
                raise GraphFormatError("multi-label targets must be (n, num_classes)")
            if not np.all((t == 0) | (t == 1)):
                raise GraphFormatError("multi-label targets must be 0/1")

    @property
    def n(self) -> int:
        return self.targets.shape[0]

    @property
    def multilabel(self) -> bool:
        return self.kind == "multi-label"


# The label header's dims are (n, num_classes).  The kind is carried in the
# top bit of num_classes so the header stays 16 bytes.
_MULTI_FLAG = 1 << 31


def save_labels(labels: LabelSet, path) -> None:
    n, c = labels.n, labels.num_classes
    with open(path, "wb") as fh:
        if labels.multilabel:
            fh.write(_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, n, c | _MULTI_FLAG))
            fh.write(labels.targets.astype(np.uint8).tobytes())
        else:
            fh.write(_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, n, c))
            fh.write(labels.targets.astype("<u4").tobytes())


def load_labels(path) -> LabelSet:
    raw = Path(path).read_bytes()
    n, c = _read_header(raw, LABEL_MAGIC, path)
    if c & _MULTI_FLAG:
        c &= ~_MULTI_FLAG
        _check_size(raw, _HEADER.size + n * c, path)
        targets = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size).reshape(n, c).copy()
        return LabelSet("multi-label", c, targets)
    _check_size(raw, _HEADER.size + 4 * n, path)
    targets = np.frombuffer(raw, dtype="<u4", offset=_HEADER.size).astype(np.int64)
    return LabelSet("single-label", c, targets)


# --- splits --------------------------------------------------------------

@dataclass(frozen=True)
class NodeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, n: int) -> None:
        parts = (self.train, self.val, self.test)
        for p in parts:
            if p.size and (p.min() < 0 or p.max() >= n):
                raise GraphFormatError("split index out of range")
            if np.unique(p).size != p.size:
                raise GraphFormatError("duplicate index within a split part")
        if self.train.size == 0:
            raise GraphFormatError("train split is empty")
        allidx = np.concatenate(parts)
        if np.unique(allidx).size != allidx.size:
            raise GraphFormatError("overlapping splits")

    def part(self, name: str) -> np.ndarray:
        if name not in ("train", "val", "test"):
            raise KeyError(f"unknown split part {name!r}")
        return getattr(self, name)


def save_split(split: NodeSplit, n: int, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SPLIT_MAGIC, FORMAT_VERSION, n, 3))
        for p in (split.train, split.val, split.test):
            fh.write(struct.pack("<I", p.size))
            fh.write(p.astype("<u4").tobytes())


def load_split(path) -> NodeSplit:
    raw = Path(path).read_bytes()
    n, k = _read_header(raw, SPLIT_MAGIC, path)
    if k != 3:
        raise GraphFormatError(f"{path}: expected 3 split parts, header says {k}")
    pos = _HEADER.size
    parts = []
    for _ in range(3):
        if pos + 4 > len(raw):
            raise GraphFormatError(f"{path}: truncated split file")
        (size,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if pos + 4 * size > len(raw):
            raise GraphFormatError(f"{path}: truncated split file")
        parts.append(np.frombuffer(raw, dtype="<u4", count=size, offset=pos).astype(np.int64))
        pos += 4 * size
    _check_size(raw, pos, path)
    split = NodeSplit(*parts)
    split.validate(n)
    return split
