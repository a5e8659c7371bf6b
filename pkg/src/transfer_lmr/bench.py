"""Wall-clock latency of the aggregate -> refine -> classify path on one batch."""
from __future__ import annotations

import platform
import time

import numpy as np

from .core import rng_stream
from .lmr import contribution, lmr_forward, temporal_average
from .model import head, init_params


def bench_latency(batch: int = 64, dim: int = 2048, steps: int = 7, classes: int = 5,
                  iterations: int = 100, warmup: int = 5, seed: int = 0) -> dict:
    if batch < 2 or dim < 1 or steps < 1 or iterations < 1:
        raise ValueError("need batch >= 2, dim >= 1, steps >= 1, iterations >= 1")
    rng = rng_stream(seed, "bench")
    x = rng.standard_normal((batch, steps, dim)).astype(np.float32)
    labels = rng.integers(0, classes, size=batch)
    params = init_params("linear", dim, classes, rng)
    table = contribution(np.geomspace(1000, 10, classes).round(), 0.4, 1.0)
    mix_rng = rng_stream(seed, "bench", "mixer")

    def once():
        Z = temporal_average(x)
        refined, _ = lmr_forward(Z, labels, table, 0.5, mix_rng)
        return head(params, refined.M_star)

    for _ in range(warmup):
        once()
    per_batch = np.empty(iterations)
    for i in range(iterations):
        t0 = time.perf_counter()
        once()
        per_batch[i] = time.perf_counter() - t0
    per_sample_ms = per_batch * 1e3 / batch
    return {
        "batch": batch, "dim": dim, "steps": steps, "classes": classes, "iterations": iterations,
        "median_ms_per_sample": float(np.median(per_sample_ms)),
        "p95_ms_per_sample": float(np.percentile(per_sample_ms, 95)),
        "median_ms_per_batch": float(np.median(per_batch) * 1e3),
        "machine": platform.machine(), "python": platform.python_version(),
        "numpy": np.__version__,
    }
