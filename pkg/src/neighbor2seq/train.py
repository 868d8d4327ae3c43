"""Mini-batch training over precomputed node sequences.

Once sequences are precomputed every node is an independent sample, so a
batch is just a random subset of training nodes; the graph is never touched
during training.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .autodiff.optim import Adam
from .graph import LabelSet, NodeSplit, load_labels, load_split
from .models import Model, ModelConfig
from .precompute import SequenceTensor, load_sequence, read_sequence_header

log = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 4 << 30


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig
    seed: int = 0
    batch_size: int = 256
    learning_rate: float = 1e-2
    weight_decay: float = 0.0
    max_epochs: int = 100
    patience: int = 10
    eval_every: int = 1
    sequence_path: str | None = None
    labels_path: str | None = None
    split_path: str | None = None
    # inductive runs: training batches come from sequences precomputed on the
    # train-only subgraph, evaluation from sequence_path
    train_sequence_path: str | None = None
    checkpoint_path: str | None = None
    metrics_path: str | None = None
    figure_path: str | None = None
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1 or self.eval_every < 1 or self.max_epochs < 0:
            raise ValueError("patience and eval_every must be >= 1, max_epochs >= 0")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["model"] = self.model.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        if "model" not in data:
            raise ValueError("train config needs a 'model' object")
        data["model"] = ModelConfig.from_dict(data["model"])
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Metrics:
    loss: float
    accuracy: float | None = None
    f1_micro: float | None = None
    seconds: float = 0.0

    @property
    def metric(self) -> float:
        return self.f1_micro if self.f1_micro is not None else self.accuracy

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


@dataclass
class TrainResult:
    model: Model
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = -math.inf


def minibatch_sampler(train_idx: np.ndarray, batch_size: int,
                      rng: np.random.Generator) -> Iterator[np.ndarray]:
    """One epoch: a fresh uniform permutation of ``train_idx`` cut into batches."""
    train_idx = np.asarray(train_idx)
    if train_idx.size == 0:
        raise ValueError("training set is empty")
    order = train_idx[rng.permutation(train_idx.size)]
    for start in range(0, order.size, batch_size):
        yield order[start:start + batch_size]


def accuracy(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean(pred == target)) if target.size else 0.0


def f1_micro(pred: np.ndarray, target: np.ndarray) -> float:
    """Pooled F1 over all (node, class) pairs; 1.0 when nothing is positive."""
    pred, target = pred.astype(bool), target.astype(bool)
    tp = np.sum(pred & target)
    fp = np.sum(pred & ~target)
    fn = np.sum(~pred & target)
    if tp + fp + fn == 0:
        return 1.0
    return float(tp / (tp + 0.5 * (fp + fn)))


def evaluate(model: Model, seq: SequenceTensor, labels: LabelSet, idx: np.ndarray,
             batch_size: int = 4096) -> Metrics:
    start = time.perf_counter()
    idx = np.asarray(idx, dtype=np.int64)
    total, preds = 0.0, []
    for s in range(0, idx.size, batch_size):
        b = idx[s:s + batch_size]
        logits = model.forward(seq.gather(b), training=False)
        loss, _ = model.loss(logits, labels.targets[b])
        total += loss * b.size
        preds.append(model.predict(logits))
    target = labels.targets[idx]
    pred = np.concatenate(preds) if preds else target[:0]
    loss = total / max(idx.size, 1)
    seconds = time.perf_counter() - start
    if labels.multilabel:
        return Metrics(loss, f1_micro=f1_micro(pred, target), seconds=seconds)
    return Metrics(loss, accuracy=accuracy(pred, target), seconds=seconds)


def train_epoch(model: Model, opt: Adam, seq: SequenceTensor, labels: LabelSet,
                train_idx: np.ndarray, batch_size: int, sample_rng, dropout_rng,
                epoch: int = 0) -> Metrics:
    start = time.perf_counter()
    total, count, preds, targets = 0.0, 0, [], []
    for bi, batch in enumerate(minibatch_sampler(train_idx, batch_size, sample_rng)):
        x = seq.gather(batch)
        y = labels.targets[batch]
        opt.zero_grad()
        logits = model.forward(x, training=True, rng=dropout_rng)
        loss, dlogits = model.loss(logits, y)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {bi}")
        model.backward(dlogits)
        opt.step()
        total += loss * batch.size
        count += batch.size
        preds.append(model.predict(logits))
        targets.append(y)
    pred, target = np.concatenate(preds), np.concatenate(targets)
    seconds = time.perf_counter() - start
    if labels.multilabel:
        return Metrics(total / count, f1_micro=f1_micro(pred, target), seconds=seconds)
    return Metrics(total / count, accuracy=accuracy(pred, target), seconds=seconds)


def _check_shapes(config: TrainConfig, seq: SequenceTensor, labels: LabelSet) -> None:
    mc = config.model
    if seq.L != mc.L:
        raise TrainingError(f"sequence length mismatch: file has L={seq.L}, config L={mc.L}")
    if seq.d != mc.d:
        raise TrainingError(f"feature dimension mismatch: file has d={seq.d}, config d={mc.d}")
    if labels.n != seq.n:
        raise TrainingError(f"labels cover {labels.n} nodes, sequences {seq.n}")
    if labels.num_classes != mc.num_classes:
        raise TrainingError(f"labels have {labels.num_classes} classes, config {mc.num_classes}")
    if labels.multilabel != (mc.task == "multi-label"):
        raise TrainingError(f"label kind {labels.kind} does not match task {mc.task}")


def fit(config: TrainConfig, seq: SequenceTensor, labels: LabelSet, split: NodeSplit,
        train_seq: SequenceTensor | None = None) -> TrainResult:
    """Train with early stopping on the validation metric.

    The returned model holds the best-validation parameters.  Everything is
    a deterministic function of ``config.seed``.
    """
    _check_shapes(config, seq, labels)
    train_seq = train_seq if train_seq is not None else seq
    _check_shapes(config, train_seq, labels)
    model = Model(config.model, seed=config.seed)
    opt = Adam(model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
    sample_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    result = TrainResult(model)
    best_state = model.state_dict()
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        m = train_epoch(model, opt, train_seq, labels, split.train, config.batch_size,
                        sample_rng, dropout_rng, epoch)
        result.log.append({"epoch": epoch, "split": "train", "loss": m.loss,
                           "metric": m.metric, "seconds": m.seconds})
        if epoch % config.eval_every and epoch != config.max_epochs:
            continue
        if split.val.size == 0:
            best_state, result.best_epoch, result.best_metric = model.state_dict(), epoch, m.metric
            continue
        v = evaluate(model, seq, labels, split.val)
        result.log.append({"epoch": epoch, "split": "val", "loss": v.loss,
                           "metric": v.metric, "seconds": v.seconds})
        log.info("epoch %d train loss %.4f val metric %.4f", epoch, m.loss, v.metric)
        if v.metric > result.best_metric:
            result.best_metric, result.best_epoch = v.metric, epoch
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state_dict(best_state)
    return result


def load_inputs(config: TrainConfig):
    if not (config.sequence_path and config.labels_path and config.split_path):
        raise TrainingError("config needs sequence_path, labels_path and split_path")
    seq = open_sequence(config.sequence_path, config.memory_budget_bytes)
    labels = load_labels(config.labels_path)
    split = load_split(config.split_path)
    train_seq = None
    if config.train_sequence_path:
        train_seq = open_sequence(config.train_sequence_path, config.memory_budget_bytes)
    return seq, labels, split, train_seq


def open_sequence(path, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> SequenceTensor:
    """Load into memory when it fits the budget, otherwise memory-map."""
    n, L, d = read_sequence_header(path)
    mmap = 8 * n * (L + 1) * d > memory_budget
    if mmap:
        log.info("%s exceeds the memory budget; gathering batches from disk", path)
    return load_sequence(path, mmap=mmap)


def write_metrics_log(entries: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


def read_metrics_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def train(config: TrainConfig) -> TrainResult:
    """File-driven training: reads inputs from the config paths and writes the
    best checkpoint, the metrics log and (optionally) a learning-curve figure."""
    seq, labels, split, train_seq = load_inputs(config)
    # create output directories up front so a bad path fails before training
    for out in (config.checkpoint_path, config.metrics_path, config.figure_path):
        if out:
            os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    result = fit(config, seq, labels, split, train_seq)
    if config.checkpoint_path:
        result.model.save(config.checkpoint_path, {"best_epoch": result.best_epoch,
                                                   "best_metric": result.best_metric})
    if config.metrics_path:
        write_metrics_log(result.log, config.metrics_path)
    if config.figure_path:
        from .plotting import plot_training_curves
        plot_training_curves(result.log, config.figure_path)
    return result
