"""Wall-clock checks of the cost model.

Precompute should scale with the number of edges; a training epoch touches
only the precomputed sequences and should scale with the number of nodes,
not edges.
"""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .autodiff.optim import Adam
from .graph import FeatureMatrix, Graph, LabelSet, add_self_loops
from .models import Model, ModelConfig
from .precompute import neighbor2seq
from .train import train_epoch

WARMUP = 2
REPEATS = 5


@dataclass
class Variant:
    name: str
    graph: Graph
    features: FeatureMatrix


def median_time(fn, warmup: int = WARMUP, repeats: int = REPEATS) -> float:
    return interleaved_medians([fn], warmup, repeats)[0]


def interleaved_medians(fns, warmup: int = WARMUP, repeats: int = REPEATS) -> list[float]:
    """Median wall time of each callable, timed round-robin.

    Interleaving spreads slow drift on a shared machine evenly over all
    callables instead of biasing whichever ran during a busy stretch.
    """
    for _ in range(warmup):
        for fn in fns:
            fn()
    times = [[] for _ in fns]
    for _ in range(repeats):
        for fn, acc in zip(fns, times):
            start = time.perf_counter()
            fn()
            acc.append(time.perf_counter() - start)
    return [statistics.median(t) for t in times]


def time_precompute(g: Graph, x: FeatureMatrix, L: int, warmup=1, repeats=REPEATS) -> float:
    return median_time(lambda: neighbor2seq(g, x, L), warmup, repeats)


def epoch_runner(model_config: ModelConfig, values: np.ndarray, batch_size: int,
                 learning_rate: float = 1e-3, seed: int = 0):
    """Closure running one training epoch over every node on random labels."""
    from .precompute import SequenceTensor

    seq = SequenceTensor(values)
    rng = np.random.default_rng(seed)
    labels = LabelSet("single-label", model_config.num_classes,
                      rng.integers(0, model_config.num_classes, size=seq.n))
    model = Model(model_config, seed=seed)
    opt = Adam(model.parameters(), lr=learning_rate)
    idx = np.arange(seq.n)
    sample_rng = np.random.default_rng([seed, 1])
    dropout_rng = np.random.default_rng([seed, 2])
    return lambda: train_epoch(model, opt, seq, labels, idx, batch_size, sample_rng,
                               dropout_rng)


def time_epoch(model_config: ModelConfig, values: np.ndarray, batch_size: int,
               learning_rate: float = 1e-3, seed: int = 0,
               warmup=WARMUP, repeats=REPEATS) -> float:
    """Median wall time of a full training epoch over every node."""
    return median_time(epoch_runner(model_config, values, batch_size, learning_rate, seed),
                       warmup, repeats)


def benchmark_epoch_time(model_config: ModelConfig, variants: list[Variant],
                         batch_size: int = 1024, seed: int = 0) -> dict:
    """Precompute and per-epoch timings for each graph variant.

    Variants are timed round-robin (see :func:`interleaved_medians`).
    Ratios between variants are left to the caller.
    """
    graphs = []
    for v in variants:
        if v.features.d != model_config.d:
            raise ValueError(f"variant {v.name}: d={v.features.d}, model expects {model_config.d}")
        graphs.append(v.graph if v.graph.has_self_loops else add_self_loops(v.graph))
    L = model_config.L
    pre = interleaved_medians([lambda g=g, v=v: neighbor2seq(g, v.features, L)
                               for g, v in zip(graphs, variants)], warmup=1)
    runners = [epoch_runner(model_config, neighbor2seq(g, v.features, L).values, batch_size,
                            seed=seed) for g, v in zip(graphs, variants)]
    epochs = interleaved_medians(runners)
    report = {"L": L, "batch_size": batch_size, "warmup": WARMUP, "repeats": REPEATS,
              "variants": []}
    for v, g, p, e in zip(variants, graphs, pre, epochs):
        report["variants"].append({"name": v.name, "n": g.n, "m": g.m,
                                   "precompute_seconds": p, "epoch_seconds": e})
    return report
