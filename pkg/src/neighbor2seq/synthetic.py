"""Desk-scale synthetic graphs and node-classification tasks.

``planted-color-denoise``
    SBM communities; each node's feature is the one-hot of its community,
    replaced by a random other community with probability ``rho``.  The
    label is the true community, so neighborhoods are needed to denoise.
``order-probe``
    Every labeled node is the root of one pendant chain of ``k`` extra nodes,
    ``1 <= k <= hops``.  Only the chain tip carries the signal feature, so in
    the root's sequence the signal first appears at position ``k``; the label
    is ``k - 1``.  Chain nodes are unlabeled (excluded from every split).
``sbm``
    Plain stochastic block model with Gaussian-noised one-hot features.

Every generator is a pure function of its spec.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .graph import FeatureMatrix, Graph, LabelSet, NodeSplit, from_edges

KINDS = ("planted-color-denoise", "order-probe", "sbm")


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    n: int
    seed: int = 0
    num_classes: int = 2
    p_in: float = 0.05
    p_out: float = 0.005
    rho: float = 0.4
    hops: int = 4
    noise: float = 0.5
    train_frac: float = 0.5
    val_frac: float = 0.25

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; choose from {KINDS}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        for name in ("p_in", "p_out", "rho", "train_frac", "val_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.train_frac <= 0 or self.train_frac + self.val_frac > 1.0:
            raise ValueError("need train_frac > 0 and train_frac + val_frac <= 1")
        if self.num_classes < 2 and self.kind != "order-probe":
            raise ValueError("need at least 2 communities")
        if self.kind == "order-probe" and self.hops < 1:
            raise ValueError("order-probe needs hops >= 1: the signal position must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _distinct_pairs(na: int, nb: int, count: int, same: bool, rng):
    """``count`` distinct uniform pairs (i < j when ``same``), by rejection."""
    width = nb
    keys = np.empty(0, dtype=np.int64)
    while keys.size < count:
        draw = max(2 * (count - keys.size), 16)
        i = rng.integers(0, na, size=draw)
        j = rng.integers(0, nb, size=draw)
        if same:
            ok = i != j
            i, j = np.minimum(i[ok], j[ok]), np.maximum(i[ok], j[ok])
        new = i * width + j
        merged = np.concatenate([keys, new])
        _, first = np.unique(merged, return_index=True)
        keys = merged[np.sort(first)]
    keys = keys[:count]
    return keys // width, keys % width


def sample_sbm_edges(blocks: np.ndarray, num_blocks: int, p_in: float, p_out: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample undirected SBM edges in O(n + m).

    For every block pair the number of edges is drawn from the exact
    binomial over distinct node pairs, then that many distinct pairs are
    drawn uniformly.
    """
    members = [np.flatnonzero(blocks == b) for b in range(num_blocks)]
    src, dst = [], []
    for a in range(num_blocks):
        for b in range(a, num_blocks):
            p = p_in if a == b else p_out
            na, nb = members[a].size, members[b].size
            pairs = na * (na - 1) // 2 if a == b else na * nb
            if p == 0.0 or pairs == 0:
                continue
            count = rng.binomial(pairs, p)
            i, j = _distinct_pairs(na, nb, count, a == b, rng)
            src.append(members[a][i])
            dst.append(members[b][j])
    if not src:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(src), np.concatenate(dst)


def random_graph(n: int, avg_degree: float, seed: int = 0) -> Graph:
    """Erdos-Renyi style graph with roughly ``n * avg_degree / 2`` edges."""
    rng = np.random.default_rng(seed)
    target = int(round(n * avg_degree / 2))
    src = rng.integers(0, n, size=target + target // 8 + 16)
    dst = rng.integers(0, n, size=src.size)
    keep = src != dst
    lo, hi = np.minimum(src[keep], dst[keep]), np.maximum(src[keep], dst[keep])
    key, first = np.unique(lo * n + hi, return_index=True)
    key = key[np.argsort(first)][:target]
    return from_edges(n, key // n, key % n)


def random_split(idx: np.ndarray, train_frac: float, val_frac: float,
                 rng: np.random.Generator) -> NodeSplit:
    idx = np.asarray(idx, dtype=np.int64)
    perm = idx[rng.permutation(idx.size)]
    n_train = max(1, int(round(train_frac * idx.size)))
    n_val = int(round(val_frac * idx.size))
    return NodeSplit(np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
                     np.sort(perm[n_train + n_val:]))


def _planted(spec: SyntheticSpec, rng):
    c = spec.num_classes
    blocks = rng.integers(0, c, size=spec.n)
    src, dst = sample_sbm_edges(blocks, c, spec.p_in, spec.p_out, rng)
    g = from_edges(spec.n, src, dst)
    observed = blocks.copy()
    flip = rng.random(spec.n) < spec.rho
    shift = rng.integers(1, c, size=spec.n)
    observed[flip] = (blocks[flip] + shift[flip]) % c
    x = np.eye(c)[observed]
    split = random_split(np.arange(spec.n), spec.train_frac, spec.val_frac, rng)
    return g, FeatureMatrix(x), LabelSet("single-label", c, blocks.astype(np.int64)), split


def _sbm(spec: SyntheticSpec, rng):
    c = spec.num_classes
    blocks = rng.integers(0, c, size=spec.n)
    src, dst = sample_sbm_edges(blocks, c, spec.p_in, spec.p_out, rng)
    g = from_edges(spec.n, src, dst)
    x = np.eye(c)[blocks] + spec.noise * rng.standard_normal((spec.n, c))
    split = random_split(np.arange(spec.n), spec.train_frac, spec.val_frac, rng)
    return g, FeatureMatrix(x), LabelSet("single-label", c, blocks.astype(np.int64)), split


def _order_probe(spec: SyntheticSpec, rng):
    # features: [blank, signal]
    hops = spec.hops
    roots, lengths, src, dst = [], [], [], []
    node = 0
    while True:
        k = int(rng.integers(1, hops + 1))
        if node + 1 + k > spec.n:
            break
        roots.append(node)
        lengths.append(k)
        chain = np.arange(node, node + k + 1)
        src.append(chain[:-1])
        dst.append(chain[1:])
        node += k + 1
    if not roots:
        raise ValueError(f"n={spec.n} is too small for a single order-probe group")
    roots = np.asarray(roots, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    g = from_edges(spec.n, np.concatenate(src), np.concatenate(dst))
    x = np.zeros((spec.n, 2))
    x[:, 0] = 1.0
    tips = roots + lengths
    x[tips] = [0.0, 1.0]
    y = np.zeros(spec.n, dtype=np.int64)
    y[roots] = lengths - 1
    split = random_split(roots, spec.train_frac, spec.val_frac, rng)
    return g, FeatureMatrix(x), LabelSet("single-label", hops, y), split


def gen_synthetic(spec: SyntheticSpec) -> tuple[Graph, FeatureMatrix, LabelSet, NodeSplit]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "planted-color-denoise":
        return _planted(spec, rng)
    if spec.kind == "sbm":
        return _sbm(spec, rng)
    return _order_probe(spec, rng)


def majority_vote_oracle(g: Graph, x: np.ndarray, hops: int) -> np.ndarray:
    """Walk-count weighted neighborhood vote over ``hops`` hops.

    Every node within ``hops`` hops votes for its observed (one-hot) color,
    weighted by the number of length-``hops`` walks to it on ``A + I``.
    Dense arithmetic on purpose, independent of the sparse kernel.
    """
    a = g.to_dense().astype(np.float64)
    if not g.has_self_loops:
        a += np.eye(g.n)
    votes = np.asarray(x, dtype=np.float64)
    for _ in range(hops):
        votes = a @ votes
    return np.argmax(votes, axis=1)
