import numpy as np
import pytest

from neighbor2seq.graph import add_self_loops, from_edges


def random_graph(n, avg_degree, rng, self_loops=True):
    """Uniform random undirected graph with roughly the requested degree."""
    pairs = max(1, int(n * avg_degree / 2))
    src = rng.integers(0, n, size=pairs)
    dst = rng.integers(0, n, size=pairs)
    g = from_edges(n, src, dst)
    return add_self_loops(g) if self_loops else g


def path_graph(n=3, self_loops=True):
    g = from_edges(n, np.arange(n - 1), np.arange(1, n))
    return add_self_loops(g) if self_loops else g


def triangle(self_loops=True):
    g = from_edges(3, [0, 1, 0], [1, 2, 2])
    return add_self_loops(g) if self_loops else g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def run_cli(*args, threads_env=None, cwd=None):
    """Run the CLI in a fresh interpreter; returns the CompletedProcess."""
    import os
    import subprocess
    import sys

    env = dict(os.environ)
    if threads_env is not None:
        env["NUMBA_NUM_THREADS"] = str(threads_env)
    return subprocess.run([sys.executable, "-m", "neighbor2seq.cli", *map(str, args)],
                          capture_output=True, text=True, env=env, cwd=cwd)


def write_train_config(path, out_dir, fixture, seq_path, L, head="conv", **overrides):
    """Config JSON for the CLI train command on a gen-synth fixture."""
    import json

    spec = json.loads(open(fixture["spec"]).read())
    d = 2 if spec["kind"] == "order-probe" else spec["num_classes"]
    classes = spec["hops"] if spec["kind"] == "order-probe" else spec["num_classes"]
    cfg = {"model": {"head": head, "L": L, "d": d, "d_hidden": 8, "num_classes": classes,
                     "dropout_rate": 0.2},
           "seed": 3, "batch_size": 64, "learning_rate": 0.01, "max_epochs": 4, "patience": 5,
           "sequence_path": str(seq_path), "labels_path": fixture["labels"],
           "split_path": fixture["split"], "checkpoint_path": str(out_dir / "model.n2sc"),
           "metrics_path": str(out_dir / "metrics.jsonl")}
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path
