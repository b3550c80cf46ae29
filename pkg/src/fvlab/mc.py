"""Replica-parallel Monte Carlo helpers: fan-out, Wilson intervals, summaries."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .params import RngStream

Z975 = 1.959963984540054  # two-sided 95%


def thread_budget() -> int:
    """Replica parallelism cap: FV_LAB_THREADS env var, else the CPU count."""
    raw = os.environ.get("FV_LAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def replica_map(fn, rng: RngStream, replicas: int, chunk: int = 64) -> list:
    """Run ``fn(stream)`` once per replica and return results in replica order.

    Each replica owns stream ``rng.substream(i)``, so the output is
    independent of the thread count.  Threads help when ``fn`` releases the
    GIL (the jitted kernels do); otherwise this degrades gracefully to
    serial execution.
    """
    streams = rng.substreams(replicas)
    workers = thread_budget()
    if workers <= 1 or replicas < 2 * chunk:
        return [fn(s) for s in streams]
    chunks = [streams[i: i + chunk] for i in range(0, replicas, chunk)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda batch: [fn(s) for s in batch], chunks))
    return [r for part in parts for r in part]


def wilson_interval(successes: int, trials: int, z: float = Z975) -> tuple[float, float, float]:
    """Wilson score interval for a binomial proportion: (freq, lo, hi)."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    freq = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (freq + z2 / (2.0 * trials)) / denom
    half = (z / denom) * math.sqrt(freq * (1.0 - freq) / trials + z2 / (4.0 * trials * trials))
    lo = 0.0 if successes == 0 else max(0.0, center - half)  # edge cases are exact
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return freq, lo, hi


@dataclass(frozen=True)
class MeanCI:
    """Sample mean with a normal-approximation 95% confidence interval."""

    mean: float
    se: float
    lo: float
    hi: float
    n: int


def mean_ci(values: np.ndarray, z: float = Z975) -> MeanCI:
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 2:
        raise ValueError("need at least 2 values for a confidence interval")
    m = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n))
    return MeanCI(mean=m, se=se, lo=m - z * se, hi=m + z * se, n=n)
