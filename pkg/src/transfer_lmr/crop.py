"""Boundary-constrained random-resized-crop geometry.

Crops keep at least ``r_w`` of the frame width and ``r_h`` of its height, so
only thin peripheral bands on the left/right can be cut away.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CropParams:
    r_w: float = 0.9
    r_h: float = 0.6

    def __post_init__(self):
        if not (0 < self.r_w <= 1 and 0 < self.r_h <= 1):
            raise ValueError(f"crop ratios must lie in (0, 1], got r_w={self.r_w} r_h={self.r_h}")


@dataclass(frozen=True)
class CropRect:
    x: int
    y: int
    cw: int
    ch: int


def aspect_bounds(w: float, h: float, params: CropParams = CropParams()) -> tuple[float, float]:
    if w <= 0 or h <= 0:
        raise ValueError("frame size must be positive")
    return params.r_w * w / h, w / (params.r_h * h)


def min_area_ratio(params: CropParams = CropParams()) -> float:
    return params.r_w * params.r_h


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _min_side(ratio: float, size: int) -> int:
    # 1e-9 absorbs float error in products like 0.9 * 1920
    return max(1, math.ceil(ratio * size - 1e-9))


def sample_crop(w: int, h: int, params: CropParams, rng: np.random.Generator) -> CropRect:
    if w <= 0 or h <= 0:
        raise ValueError("frame size must be positive")
    u_w = rng.uniform(params.r_w, 1.0)
    u_h = rng.uniform(params.r_h, 1.0)
    cw = min(w, max(_min_side(params.r_w, w), _round_half_up(u_w * w)))
    ch = min(h, max(_min_side(params.r_h, h), _round_half_up(u_h * h)))
    x = int(rng.integers(0, w - cw, endpoint=True))
    y = int(rng.integers(0, h - ch, endpoint=True))
    return CropRect(x, y, cw, ch)


def sample_crops(w: int, h: int, params: CropParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """Vectorised ``sample_crop``; returns an (n, 4) int array of (x, y, cw, ch)."""
    u_w = rng.uniform(params.r_w, 1.0, size=n)
    u_h = rng.uniform(params.r_h, 1.0, size=n)
    cw = np.clip(np.floor(u_w * w + 0.5).astype(np.int64), _min_side(params.r_w, w), w)
    ch = np.clip(np.floor(u_h * h + 0.5).astype(np.int64), _min_side(params.r_h, h), h)
    x = rng.integers(0, w - cw, endpoint=True)
    y = rng.integers(0, h - ch, endpoint=True)
    return np.stack([x, y, cw, ch], axis=1)


def crop_and_resize(frames: np.ndarray, rect: CropRect, out_hw: tuple[int, int] | None = None) -> np.ndarray:
    """Crop the last two axes (H, W) of a frame grid, then nearest-neighbour resize."""
    frames = np.asarray(frames)
    if frames.ndim < 2:
        raise ValueError("need at least a 2-D grid")
    h, w = frames.shape[-2:]
    if rect.x < 0 or rect.y < 0 or rect.x + rect.cw > w or rect.y + rect.ch > h:
        raise ValueError(f"crop {rect} exceeds {w}x{h} grid")
    out_h, out_w = out_hw if out_hw is not None else (h, w)
    crop = frames[..., rect.y:rect.y + rect.ch, rect.x:rect.x + rect.cw]
    rows = np.minimum((np.arange(out_h) + 0.5) * rect.ch / out_h, rect.ch - 1).astype(np.int64)
    cols = np.minimum((np.arange(out_w) + 0.5) * rect.cw / out_w, rect.cw - 1).astype(np.int64)
    return crop[..., rows[:, None], cols[None, :]]
