"""Temporal aggregation and long-tailed mixed reconstruction (LMR) of batch features.

The refinement chain for a batch of aggregated features ``Z`` (B x D):

    S = cosine similarities between rows (self excluded)
    W = row softmax of S over partners
    R = W @ Z                        reconstruction from batch neighbours
    M = c(y) * R + (1 - c(y)) * Z    per-class fusion
    M*, Y* = stochastic pairwise mixing of M and one-hot labels

Everything here is differentiable; ``lmr_backward`` propagates a gradient on
``M*`` back to ``Z`` so an upstream feature extractor can be fine-tuned.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import one_hot


@dataclass(frozen=True)
class ContributionTable:
    c: np.ndarray
    w_rec: float
    decay: float


@dataclass
class RefinedBatch:
    M_star: np.ndarray
    Y_star: np.ndarray


@dataclass
class LMRTrace:
    """Intermediates of one forward pass, kept for the backward pass."""

    Z: np.ndarray
    norms: np.ndarray
    S: np.ndarray
    W: np.ndarray
    c_rows: np.ndarray
    mix: np.ndarray


def temporal_average(features) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[1] < 1:
        raise ValueError(f"expected B x T x D features with T >= 1, got {features.shape}")
    return features.mean(axis=1)


def _unit_rows(Z):
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    safe = np.where(norms > 0, norms, 1.0)
    return Z / safe[:, None] * (norms > 0)[:, None], norms


def cosine_similarity_matrix(Z) -> np.ndarray:
    """Pairwise cosine similarity with ``-inf`` on the diagonal.

    Rows with zero norm have similarity 0 to every partner.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError("need at least two rows to compare")
    N, _ = _unit_rows(Z)
    S = N @ N.T
    np.fill_diagonal(S, -np.inf)
    return S


def reconstruction_weights(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    B = S.shape[0]
    if S.shape != (B, B) or B < 2:
        raise ValueError("similarity matrix must be square with B >= 2")
    S = S.copy()
    np.fill_diagonal(S, -np.inf)
    E = np.exp(S - S.max(axis=1, keepdims=True))
    return E / E.sum(axis=1, keepdims=True)


def reconstruct(Z, W) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (Z.shape[0], Z.shape[0]):
        raise ValueError(f"weights {W.shape} do not match batch of {Z.shape[0]}")
    return W @ Z


def contribution(class_counts, w_rec: float = 0.4, decay: float = 1.0) -> ContributionTable:
    """Per-class reconstruction weight, 0 for the largest class and ``w_rec`` for the smallest.

    ``c[j] = w_rec * ((n_max - n_j) / (n_max - n_min)) ** decay`` over positive
    counts; classes with no samples get the tail value ``w_rec``.
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or (counts < 0).any() or not (counts > 0).any():
        raise ValueError("class counts must be non-negative with at least one positive")
    if not 0.0 <= w_rec <= 1.0:
        raise ValueError(f"w_rec must lie in [0, 1], got {w_rec}")
    if decay < 0:
        raise ValueError(f"decay must be >= 0, got {decay}")
    pos = counts[counts > 0]
    n_max, n_min = pos.max(), pos.min()
    if n_max == n_min:
        c = np.zeros_like(counts)
        c[counts == 0] = w_rec
    else:
        ramp = np.clip((n_max - counts) / (n_max - n_min), 0.0, 1.0)
        c = w_rec * ramp**decay
    c.setflags(write=False)
    return ContributionTable(c, float(w_rec), float(decay))


def fuse(Z, R, table: ContributionTable, labels) -> np.ndarray:
    c = table.c[np.asarray(labels)][:, None]
    return c * R + (1.0 - c) * Z


def mixing_matrix(B: int, p_mix: float, rng: np.random.Generator | None = None, *,
                  perm=None, coins=None, lam=None) -> np.ndarray:
    """B x B matrix ``A`` with ``M* = A @ M``.

    Row i is ``lam_i * e_i + (1 - lam_i) * e_perm(i)`` when its coin comes up,
    else ``e_i``. Explicit ``perm``/``coins``/``lam`` override the random draws;
    the generator is consumed identically either way.
    """
    if rng is not None:
        drawn_perm = rng.permutation(B)
        drawn_coins = rng.random(B) < p_mix
        drawn_lam = rng.uniform(0.5, 1.0, size=B)
        perm = drawn_perm if perm is None else perm
        coins = drawn_coins if coins is None else coins
        lam = drawn_lam if lam is None else lam
    perm = np.arange(B) if perm is None else np.asarray(perm)
    coins = False if coins is None else coins
    lam = 1.0 if lam is None else lam
    coins = np.broadcast_to(np.asarray(coins, dtype=bool), (B,))
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (B,))
    A = np.eye(B)
    rows = np.flatnonzero(coins)
    A[rows, rows] = lam[rows]
    A[rows, perm[rows]] += 1.0 - lam[rows]
    return A


def _apply_mix(A, M, labels, num_classes):
    Y = one_hot(labels, num_classes)
    mixed = ~np.all(A == np.eye(len(A)), axis=1)
    M_star = M.copy()
    Y_star = Y.copy()
    # untouched rows are copied rather than multiplied so they stay bit-exact
    if mixed.any():
        M_star[mixed] = A[mixed] @ M
        Y_star[mixed] = A[mixed] @ Y
    return M_star, Y_star


def pairwise_mix(M, labels, num_classes: int, p_mix: float, rng: np.random.Generator | None = None,
                 **overrides) -> RefinedBatch:
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] < 2:
        raise ValueError("pairwise mixing needs B >= 2")
    A = mixing_matrix(M.shape[0], p_mix, rng, **overrides)
    return RefinedBatch(*_apply_mix(A, M, labels, num_classes))


def lmr_forward(Z, labels, table: ContributionTable, p_mix: float,
                rng: np.random.Generator | None = None, **mix_overrides) -> tuple[RefinedBatch, LMRTrace]:
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    B = Z.shape[0]
    if B < 2:
        raise ValueError(f"refinement needs at least two samples per batch, got {B}")
    S = cosine_similarity_matrix(Z)
    W = reconstruction_weights(S)
    R = reconstruct(Z, W)
    M = fuse(Z, R, table, labels)
    A = mixing_matrix(B, p_mix, rng, **mix_overrides)
    M_star, Y_star = _apply_mix(A, M, labels, len(table.c))
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    trace = LMRTrace(Z, norms, S, W, table.c[labels], A)
    return RefinedBatch(M_star, Y_star), trace


def lmr_backward(trace: LMRTrace, d_mstar) -> np.ndarray:
    """Gradient with respect to ``Z`` given the gradient on ``M*``."""
    Z, W = trace.Z, trace.W
    c = trace.c_rows[:, None]
    if np.array_equal(trace.mix, np.eye(len(trace.mix))):
        dM = np.array(d_mstar, dtype=np.float64)
    else:
        dM = trace.mix.T @ d_mstar
    dZ = (1.0 - c) * dM
    dR = c * dM
    if not np.any(dR):
        return dZ
    dZ += W.T @ dR
    dW = dR @ Z.T
    dS = W * (dW - np.sum(W * dW, axis=1, keepdims=True))
    np.fill_diagonal(dS, 0.0)
    N, norms = _unit_rows(Z)
    dN = dS @ N + dS.T @ N
    live = norms > 0
    radial = np.sum(dN * N, axis=1, keepdims=True) * N
    dZ[live] += (dN[live] - radial[live]) / norms[live, None]
    return dZ


def refine_batch(features, labels, table: ContributionTable, p_mix: float,
                 rng: np.random.Generator | None = None, **mix_overrides) -> RefinedBatch:
    """Aggregate B x T x D features over time and run the full refinement chain."""
    Z = temporal_average(features)
    refined, _ = lmr_forward(Z, labels, table, p_mix, rng, **mix_overrides)
    return refined
