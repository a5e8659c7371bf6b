"""Synthetic heavy-tailed feature datasets with engineered confusable class pairs.

Every class owns an orthonormal direction ``u_j`` and mean ``m_j = scale * u_j``.
A confusable pair ``(head, tail, alpha)`` pulls the tail mean toward the head:
``m_tail = alpha * m_head + (1 - alpha) * scale * u_tail``. A sample of class j
is a T x D sequence ``m_j + drift(t) + noise`` where the drift is a centred
linear ramp along a random per-sample direction, so it vanishes under temporal
averaging while individual timesteps stay perturbed.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from .core import FeatureDataset, rng_stream

METEOR_COUNTS = (5107, 1526, 297, 206, 62)
METEOR_NAMES = ("OT", "DT", "WL", "CT", "YD")
HDD_COUNTS = (4859, 1368, 1363, 569, 496, 463, 245, 131, 97, 71, 68)
HDD_NAMES = ("IP", "LT", "RT", "CW", "LLC", "RLC", "LLB", "MG", "RLB", "RP", "UT")


@dataclass
class SynthSpec:
    counts: tuple[int, ...]
    D: int = 64
    T: int = 7
    sigma: float = 0.3
    drift: float = 0.5
    scale: float = 1.0
    confusable_pairs: tuple[tuple[int, int, float], ...] = ()
    class_names: tuple[str, ...] | None = None
    test_counts: tuple[int, ...] | None = None
    test_per_class: int = 100
    seed: int = 0

    def __post_init__(self):
        self.counts = tuple(int(n) for n in self.counts)
        self.confusable_pairs = tuple((int(h), int(t), float(a)) for h, t, a in self.confusable_pairs)
        C = len(self.counts)
        if C < 1 or any(n <= 0 for n in self.counts):
            raise ValueError("counts: every class needs a positive count")
        if self.D < C:
            raise ValueError(f"D: need D >= C for orthogonal class directions (D={self.D}, C={C})")
        if self.T < 1:
            raise ValueError("T: must be >= 1")
        if not self.sigma > 0:
            raise ValueError(f"sigma: must be > 0, got {self.sigma}")
        if self.drift < 0 or self.scale <= 0:
            raise ValueError("drift must be >= 0 and scale > 0")
        for h, t, a in self.confusable_pairs:
            if not (0 <= h < C and 0 <= t < C and h != t):
                raise ValueError(f"confusable_pairs: bad pair ({h}, {t})")
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"alpha: overlap must lie in [0, 1], got {a}")
        if self.class_names is None:
            self.class_names = tuple(f"c{j}" for j in range(C))
        self.class_names = tuple(self.class_names)
        if len(self.class_names) != C:
            raise ValueError("class_names: one name per class")
        if self.test_counts is not None:
            self.test_counts = tuple(int(n) for n in self.test_counts)
            if len(self.test_counts) != C or any(n < 0 for n in self.test_counts):
                raise ValueError("test_counts: one non-negative count per class")

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    def test_profile(self) -> tuple[int, ...]:
        if self.test_counts is not None:
            return self.test_counts
        return (self.test_per_class,) * self.num_classes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusable_pairs"] = [list(p) for p in self.confusable_pairs]
        return d


def class_means(spec: SynthSpec) -> np.ndarray:
    C, D = spec.num_classes, spec.D
    rng = rng_stream(spec.seed, "synth", "means")
    q, _ = np.linalg.qr(rng.standard_normal((D, C)))
    dirs = q.T
    means = spec.scale * dirs
    for h, t, a in spec.confusable_pairs:
        means[t] = a * means[h] + (1.0 - a) * spec.scale * dirs[t]
    return means


def _class_samples(spec, means, j, n, split):
    rng = rng_stream(spec.seed, "synth", split, j)
    T, D = spec.T, spec.D
    ramp = (np.arange(T) / (T - 1) - 0.5) if T > 1 else np.zeros(1)
    direction = rng.standard_normal((n, D))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-12)
    noise = rng.normal(0.0, spec.sigma, size=(n, T, D))
    x = means[j] + spec.drift * ramp[None, :, None] * direction[:, None, :] + noise
    return x.astype(np.float32)


def _build(spec, means, counts, split):
    blocks = [_class_samples(spec, means, j, n, split) for j, n in enumerate(counts)]
    feats = np.concatenate(blocks) if blocks else np.zeros((0, spec.T, spec.D), np.float32)
    labels = np.repeat(np.arange(spec.num_classes), counts)
    return FeatureDataset(feats, labels, spec.class_names)


def generate(spec: SynthSpec) -> tuple[FeatureDataset, FeatureDataset]:
    """Train and test datasets for ``spec``; each class uses its own derived stream."""
    means = class_means(spec)
    return _build(spec, means, spec.counts, "train"), _build(spec, means, spec.test_profile(), "test")


def make_meteor_like(scale_divisor: int = 10, D: int = 64, T: int = 7, seed: int = 0,
                     alpha: float = 0.9, **overrides) -> SynthSpec:
    """Five classes with the METEOR training profile divided by ``scale_divisor`` (ceiling).

    Class 0 (head) and class 3 form the confusable head/tail pair; classes 1 and
    2 form a mid/tail pair.
    """
    if scale_divisor < 1:
        raise ValueError("scale divisor must be >= 1")
    counts = tuple(-(-n // scale_divisor) for n in METEOR_COUNTS)
    kw = dict(counts=counts, D=D, T=T, seed=seed, class_names=METEOR_NAMES,
              confusable_pairs=((0, 3, alpha), (1, 2, alpha)))
    kw.update(overrides)
    return SynthSpec(**kw)


def make_hdd_like(scale_divisor: int = 10, D: int = 64, T: int = 7, seed: int = 0,
                  alpha: float = 0.9, **overrides) -> SynthSpec:
    """Eleven classes with the HDD training profile; two head/tail confusable pairs."""
    if scale_divisor < 1:
        raise ValueError("scale divisor must be >= 1")
    counts = tuple(-(-n // scale_divisor) for n in HDD_COUNTS)
    kw = dict(counts=counts, D=D, T=T, seed=seed, class_names=HDD_NAMES,
              confusable_pairs=((0, 10, alpha), (4, 8, alpha)))
    kw.update(overrides)
    return SynthSpec(**kw)


def oracle_log_posterior(spec: SynthSpec, Z, priors=None) -> np.ndarray:
    """Exact class log-posteriors of temporally averaged features.

    The averaged drift is zero, so ``Z | class j ~ N(m_j, sigma^2 / T * I)``.
    ``priors=None`` gives the maximum-likelihood (flat prior) classifier.
    """
    means = class_means(spec)
    var = spec.sigma**2 / spec.T
    Z = np.asarray(Z, dtype=np.float64)
    d2 = ((Z[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    ll = -0.5 * d2 / var
    if priors is not None:
        ll = ll + np.log(np.asarray(priors, dtype=np.float64))
    return ll - logsumexp(ll, axis=1, keepdims=True)


def pair_separation(spec: SynthSpec, head: int, tail: int) -> float:
    """Distance between two class means in units of the averaged-feature std."""
    means = class_means(spec)
    return float(np.linalg.norm(means[head] - means[tail]) / (spec.sigma / math.sqrt(spec.T)))
