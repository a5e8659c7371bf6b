"""Classifier head, optional per-timestep feature extractor, losses, gradients and SGD.

Two architectures share one parameter container:

``linear``  temporal average of the raw features, then ``logits = Z @ W + b``.
``mlp``     a tanh extractor applied to every timestep, temporal average of its
            activations, then a linear head. The extractor plays the role of a
            trainable backbone; refinement operates on its averaged output.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

ARCHS = ("linear", "mlp")
CKPT_MAGIC = b"TLMC"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIII")
_LOG_EPS = 1e-12


class CheckpointError(ValueError):
    error_id = "bad_checkpoint"


@dataclass
class ClassifierParams:
    arch: str
    tensors: dict[str, np.ndarray]

    @property
    def names(self) -> tuple[str, ...]:
        return ("W1", "b1", "W", "b") if self.arch == "mlp" else ("W", "b")

    @property
    def in_dim(self) -> int:
        return self.tensors["W1" if self.arch == "mlp" else "W"].shape[0]

    @property
    def hidden(self) -> int:
        return self.tensors["W1"].shape[1] if self.arch == "mlp" else 0

    @property
    def num_classes(self) -> int:
        return self.tensors["W"].shape[1]

    def copy(self) -> ClassifierParams:
        return ClassifierParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in self.names])

    def __eq__(self, other):
        if not isinstance(other, ClassifierParams):
            return NotImplemented
        return self.arch == other.arch and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.names
        )


def init_params(arch: str, in_dim: int, num_classes: int, rng: np.random.Generator,
                hidden: int = 64) -> ClassifierParams:
    """Uniform init in +-1/sqrt(fan_in) for every tensor."""
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}")

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    if arch == "linear":
        tensors = {"W": uniform(in_dim, (in_dim, num_classes)), "b": uniform(in_dim, num_classes)}
    else:
        tensors = {
            "W1": uniform(in_dim, (in_dim, hidden)),
            "b1": uniform(in_dim, hidden),
            "W": uniform(hidden, (hidden, num_classes)),
            "b": uniform(hidden, num_classes),
        }
    return ClassifierParams(arch, tensors)


def _as_sequence(features):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, None, :]
    if x.ndim != 3:
        raise ValueError(f"features must be B x D or B x T x D, got {x.shape}")
    return x


def embed(params: ClassifierParams, features):
    """Aggregated per-sample embedding fed to the head, plus the extractor cache."""
    x = _as_sequence(features)
    if x.shape[2] != params.in_dim:
        raise ValueError(f"feature dim {x.shape[2]} does not match model input {params.in_dim}")
    if params.arch == "linear":
        return x.mean(axis=1), None
    h = np.tanh(x @ params.tensors["W1"] + params.tensors["b1"])
    return h.mean(axis=1), (x, h)


def head(params: ClassifierParams, Z) -> np.ndarray:
    return Z @ params.tensors["W"] + params.tensors["b"]


def forward(params: ClassifierParams, features) -> np.ndarray:
    Z, _ = embed(params, features)
    return head(params, Z)


def log_softmax(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits) -> np.ndarray:
    return np.exp(log_softmax(logits))


def soft_ce_loss(logits, soft_labels) -> float:
    logp = np.maximum(log_softmax(logits), np.log(_LOG_EPS))
    return float(-np.sum(np.asarray(soft_labels) * logp) / logp.shape[0])


def ce_loss(logits, labels) -> float:
    logp = np.maximum(log_softmax(logits), np.log(_LOG_EPS))
    labels = np.asarray(labels)
    return float(-np.sum(logp[np.arange(len(labels)), labels]) / len(labels))


Refiner = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, Callable[[np.ndarray], np.ndarray]]]


def loss_and_grads(params: ClassifierParams, features, soft_labels=None,
                   refiner: Refiner | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Soft cross-entropy and its exact gradients for every parameter tensor.

    ``refiner`` maps the aggregated embedding ``Z`` to ``(M*, Y*, backward)``,
    where ``backward`` turns a gradient on ``M*`` into one on ``Z``. When given,
    its targets replace ``soft_labels``.
    """
    Z, cache = embed(params, features)
    if refiner is not None:
        Zin, targets, refine_back = refiner(Z)
    else:
        Zin, targets, refine_back = Z, np.asarray(soft_labels, dtype=np.float64), None
    logits = head(params, Zin)
    loss = soft_ce_loss(logits, targets)
    B = logits.shape[0]
    dlogits = (softmax(logits) - targets) / B
    grads = {"W": Zin.T @ dlogits, "b": dlogits.sum(axis=0)}
    if params.arch == "mlp":
        dZ = dlogits @ params.tensors["W"].T
        if refine_back is not None:
            dZ = refine_back(dZ)
        x, h = cache
        T = x.shape[1]
        dpre = (dZ[:, None, :] / T) * (1.0 - h * h)
        grads["W1"] = np.einsum("btd,bth->dh", x, dpre)
        grads["b1"] = dpre.sum(axis=(0, 1))
    return loss, grads


def backward(params: ClassifierParams, features, soft_labels) -> dict[str, np.ndarray]:
    return loss_and_grads(params, features, soft_labels)[1]


@dataclass
class OptimizerState:
    lr: float
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def sgd_step(params: ClassifierParams, grads: dict[str, np.ndarray],
             state: OptimizerState) -> tuple[ClassifierParams, OptimizerState]:
    """Heavy-ball SGD: ``v = mu * v + g``; ``p = p - lr * v``."""
    new = {}
    for name in params.names:
        g = grads[name]
        v = state.velocity.get(name)
        v = g.copy() if v is None else state.momentum * v + g
        state.velocity[name] = v
        new[name] = params.tensors[name] - state.lr * v
    state.step += 1
    return ClassifierParams(params.arch, new), state


def checkpoint_bytes(params: ClassifierParams) -> bytes:
    tag = ARCHS.index(params.arch)
    parts = [_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, tag, params.in_dim, params.hidden,
                               params.num_classes)]
    parts += [params.tensors[k].astype("<f4").tobytes(order="C") for k in params.names]
    return b"".join(parts)


def save_checkpoint(params: ClassifierParams, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(params))


def parse_checkpoint(buf: bytes) -> ClassifierParams:
    if len(buf) < _CKPT_HEADER.size:
        raise CheckpointError("checkpoint shorter than header")
    magic, version, tag, d, h, c = _CKPT_HEADER.unpack_from(buf)
    if magic != CKPT_MAGIC or version != CKPT_VERSION or tag >= len(ARCHS):
        raise CheckpointError(f"bad checkpoint header {magic!r} v{version} arch={tag}")
    arch = ARCHS[tag]
    shapes = {"W": (d, c), "b": (c,)} if arch == "linear" else {
        "W1": (d, h), "b1": (h,), "W": (h, c), "b": (c,)}
    pos = _CKPT_HEADER.size
    tensors = {}
    probe = ClassifierParams(arch, {})
    for name in probe.names:
        n = int(np.prod(shapes[name]))
        if pos + 4 * n > len(buf):
            raise CheckpointError(f"checkpoint truncated in tensor {name}")
        tensors[name] = np.frombuffer(buf, "<f4", n, pos).astype(np.float64).reshape(shapes[name])
        pos += 4 * n
    if pos != len(buf):
        raise CheckpointError("trailing bytes after checkpoint tensors")
    return ClassifierParams(arch, tensors)


def load_checkpoint(path) -> ClassifierParams:
    return parse_checkpoint(Path(path).read_bytes())
