"""Instance-balanced (IB) and class-balanced (CB) batch samplers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STRATEGIES = ("ib", "cb")


def ib_probabilities(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or (counts < 0).any():
        raise ValueError("counts must be a non-negative vector")
    total = counts.sum()
    if total <= 0:
        raise ValueError("counts are all zero")
    return counts / total


def cb_probabilities(num_classes: int) -> np.ndarray:
    if num_classes < 1:
        raise ValueError("need at least one class")
    return np.full(num_classes, 1.0 / num_classes)


@dataclass
class SamplerSpec:
    strategy: str
    class_index_lists: list[np.ndarray]
    class_probs: np.ndarray

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.strategy!r}")
        self.class_probs = np.asarray(self.class_probs, dtype=np.float64)
        if len(self.class_probs) != len(self.class_index_lists):
            raise ValueError("one probability per class list is required")
        if abs(self.class_probs.sum() - 1.0) > 1e-9:
            raise ValueError("class_probs must sum to 1")
        for j, (p, members) in enumerate(zip(self.class_probs, self.class_index_lists)):
            if p > 0 and len(members) == 0:
                raise ValueError(f"class {j} has sampling mass {p:.4g} but no samples")

    @classmethod
    def from_labels(cls, labels, num_classes: int, strategy: str) -> SamplerSpec:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size == 0:
            raise ValueError("cannot sample from an empty dataset")
        lists = [np.flatnonzero(labels == j) for j in range(num_classes)]
        counts = np.array([len(x) for x in lists])
        if strategy == "ib":
            probs = ib_probabilities(counts)
        elif strategy == "cb":
            if (counts == 0).any():
                empty = np.flatnonzero(counts == 0).tolist()
                raise ValueError(f"class-balanced sampling needs every class; empty classes: {empty}")
            probs = cb_probabilities(num_classes)
        else:
            raise ValueError(f"unknown sampling strategy {strategy!r}")
        return cls(strategy, lists, probs)


def sample_batch(spec: SamplerSpec, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw indices i.i.d. with replacement: a class by probability, then a uniform member."""
    classes = rng.choice(len(spec.class_probs), size=batch_size, p=spec.class_probs)
    out = np.empty(batch_size, dtype=np.int64)
    picks = rng.random(batch_size)
    for k, j in enumerate(classes):
        members = spec.class_index_lists[j]
        out[k] = members[min(int(picks[k] * len(members)), len(members) - 1)]
    return out


class BatchSampler:
    """Single-consumer sampler owning its random stream."""

    def __init__(self, spec: SamplerSpec, batch_size: int, rng: np.random.Generator):
        self.spec = spec
        self.batch_size = batch_size
        self.rng = rng

    def __call__(self) -> np.ndarray:
        return sample_batch(self.spec, self.batch_size, self.rng)
