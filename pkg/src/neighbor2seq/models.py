"""Convolutional and attention heads over precomputed hop sequences.

Both heads share a trunk: a separate linear map per position followed by
per-vector normalization with per-position scale/shift, then dropout.

    conv: trunk -> conv1d -> relu -> conv1d -> mean over positions -> linear
    attn: trunk -> (+ positional encoding) -> query attention -> linear
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .autodiff.checkpoint import load_checkpoint, save_checkpoint
from .autodiff.tensor import Parameter, glorot_uniform

NORM_EPS = 1e-5
QUERY_INIT_STD = 0.1


@dataclass(frozen=True)
class ModelConfig:
    head: str
    L: int
    d: int
    d_hidden: int
    num_classes: int
    kernel_size: int = 3
    use_positional_encoding: bool = True
    dropout_rate: float = 0.0
    task: str = "single-label"

    def __post_init__(self):
        if self.head not in ("conv", "attn"):
            raise ValueError(f"head must be 'conv' or 'attn', got {self.head!r}")
        if self.task not in ("single-label", "multi-label"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.L < 0 or self.d < 1 or self.d_hidden < 1 or self.num_classes < 1:
            raise ValueError("L >= 0 and d, d_hidden, num_classes >= 1 required")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name and shape of every parameter, in a fixed order."""
    t, d, h, c, k = config.L + 1, config.d, config.d_hidden, config.num_classes, config.kernel_size
    shapes = {"trunk.weight": (t, h, d), "trunk.gamma": (t, h), "trunk.beta": (t, h)}
    if config.head == "conv":
        shapes.update({"conv1.kernel": (h, h, k), "conv1.bias": (h,),
                       "conv2.kernel": (h, h, k), "conv2.bias": (h,)})
    else:
        shapes["attn.query"] = (h,)
    shapes.update({"classifier.weight": (c, h), "classifier.bias": (c,)})
    return shapes


def parameter_count(config: ModelConfig) -> int:
    t, d, h, c, k = config.L + 1, config.d, config.d_hidden, config.num_classes, config.kernel_size
    trunk = t * (h * d + 2 * h) + c * h + c
    if config.head == "conv":
        return trunk + 2 * (h * h * k + h)
    return trunk + h


class Model:
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        h, d, k = config.d_hidden, config.d, config.kernel_size
        self.params: dict[str, Parameter] = {}
        for name, shape in parameter_shapes(config).items():
            if name == "trunk.weight":
                value = glorot_uniform(rng, shape, d, h)
            elif name == "trunk.gamma":
                value = np.ones(shape)
            elif name.endswith(".kernel"):
                value = glorot_uniform(rng, shape, h * k, h * k)
            elif name == "attn.query":
                value = rng.normal(0.0, QUERY_INIT_STD, size=shape)
            elif name == "classifier.weight":
                value = glorot_uniform(rng, shape, h, config.num_classes)
            else:
                value = np.zeros(shape)
            self.params[name] = Parameter(name, value)
        self.pe = ops.positional_encoding(config.L, h)
        self._caches = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name].value

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def forward(self, batch: np.ndarray, training: bool = False, rng=None) -> np.ndarray:
        cfg = self.config
        if batch.ndim != 3 or batch.shape[1:] != (cfg.L + 1, cfg.d):
            raise ValueError(f"batch shape {batch.shape} does not match "
                             f"(B, {cfg.L + 1}, {cfg.d})")
        if training and cfg.dropout_rate > 0 and rng is None:
            raise ValueError("training with dropout needs an rng")
        caches = []
        y, c = ops.linear_fwd(batch, self["trunk.weight"])
        caches.append(c)
        o, c = ops.seqnorm_fwd(y, self["trunk.gamma"], self["trunk.beta"], NORM_EPS)
        caches.append(c)
        o, c = ops.dropout_fwd(o, cfg.dropout_rate, rng, training)
        caches.append(c)
        if cfg.head == "conv":
            o, c = ops.conv1d_fwd(o, self["conv1.kernel"], self["conv1.bias"])
            caches.append(c)
            o, c = ops.relu_fwd(o)
            caches.append(c)
            o, c = ops.conv1d_fwd(o, self["conv2.kernel"], self["conv2.bias"])
            caches.append(c)
            r, c = ops.mean_pool_fwd(o)
            caches.append(c)
        else:
            if cfg.use_positional_encoding:
                o = o + self.pe
            (r, alpha), c = ops.query_attention_fwd(o, self["attn.query"])
            caches.append(c)
            self.last_attention = alpha
        logits, c = ops.dense_fwd(r, self["classifier.weight"], self["classifier.bias"])
        caches.append(c)
        self._caches = caches
        return logits

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; return the gradient w.r.t. the batch."""
        if self._caches is None:
            raise RuntimeError("backward called before forward")
        caches = list(self._caches)
        g = self.params

        def acc(name, value):
            g[name].grad += value

        dr, dw, db = ops.dense_bwd(dlogits, caches.pop())
        acc("classifier.weight", dw)
        acc("classifier.bias", db)
        if self.config.head == "conv":
            (do,) = ops.mean_pool_bwd(dr, caches.pop())
            do, dk, db = ops.conv1d_bwd(do, caches.pop())
            acc("conv2.kernel", dk)
            acc("conv2.bias", db)
            (do,) = ops.relu_bwd(do, caches.pop())
            do, dk, db = ops.conv1d_bwd(do, caches.pop())
            acc("conv1.kernel", dk)
            acc("conv1.bias", db)
        else:
            do, dq = ops.query_attention_bwd(dr, caches.pop())
            acc("attn.query", dq)
        (do,) = ops.dropout_bwd(do, caches.pop())
        dy, dgamma, dbeta = ops.seqnorm_bwd(do, caches.pop())
        acc("trunk.gamma", dgamma)
        acc("trunk.beta", dbeta)
        dx, dw = ops.linear_bwd(dy, caches.pop())
        acc("trunk.weight", dw)
        return dx

    def loss(self, logits: np.ndarray, targets: np.ndarray):
        """Return ``(loss, dlogits)`` for the configured task."""
        if self.config.task == "multi-label":
            value, cache = ops.bce_fwd(logits, targets)
            (grad,) = ops.bce_bwd(1.0, cache)
        else:
            value, cache = ops.softmax_xent_fwd(logits, targets)
            (grad,) = ops.softmax_xent_bwd(1.0, cache)
        return value, grad

    def predict(self, logits: np.ndarray) -> np.ndarray:
        return predict(logits, self.config.task)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise ValueError("checkpoint parameters do not match the model")
        for name, value in state.items():
            if value.shape != self.params[name].shape:
                raise ValueError(f"{name}: shape {value.shape} != {self.params[name].shape}")
            self.params[name].value[...] = value

    def save(self, path, extra: dict | None = None) -> None:
        header = {"model": self.config.to_dict()}
        if extra:
            header.update(extra)
        save_checkpoint(path, self.state_dict(), header)

    @classmethod
    def load(cls, path) -> "Model":
        header, state = load_checkpoint(path)
        if not header or "model" not in header:
            raise ValueError(f"{path}: checkpoint has no model config")
        model = cls(ModelConfig.from_dict(header["model"]))
        model.load_state_dict(state)
        return model


def predict(logits: np.ndarray, task: str = "single-label") -> np.ndarray:
    """Argmax (ties go to the lowest index) or a 0.5 sigmoid threshold."""
    if task == "multi-label":
        return (logits >= 0.0).astype(np.uint8)
    return np.argmax(logits, axis=1)
