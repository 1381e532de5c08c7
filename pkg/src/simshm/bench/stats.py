"""Latency distribution summaries.

Percentiles are nearest-rank: the value at 1-based index ceil(q * n) of the
ascending sort. Mean and standard deviation (population) are computed in
exact integer arithmetic when samples are integers, so results are the
correctly rounded float of the true rational value regardless of summation
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class LatencyStats:
    min: int
    mean: float
    p95: int
    p99: int
    max: int
    std: float
    n: int
    delivery_ratio: float | None = None

    def with_delivery(self, ratio: float) -> "LatencyStats":
        return replace(self, delivery_ratio=ratio)


def _nearest_rank(sorted_samples, q_num: int, q_den: int):
    n = len(sorted_samples)
    rank = -(-(q_num * n) // q_den)  # ceil without float error
    return sorted_samples[max(rank, 1) - 1]


def compute_stats(samples, delivery_ratio: float | None = None) -> LatencyStats:
    """Summarize a latency sample list (ns)."""
    n = len(samples)
    if n == 0:
        raise ValueError("compute_stats needs at least one sample")
    xs = sorted(samples)
    s = sum(xs)
    ss = sum(x * x for x in xs)
    mean = s / n
    var = (n * ss - s * s) / (n * n)
    if var < 0:  # float-input roundoff only; exact for ints
        var = 0.0
    return LatencyStats(
        min=xs[0],
        mean=mean,
        p95=_nearest_rank(xs, 95, 100),
        p99=_nearest_rank(xs, 99, 100),
        max=xs[-1],
        std=math.sqrt(var),
        n=n,
        delivery_ratio=delivery_ratio,
    )


# Two-sided 95% Student-t critical values by degrees of freedom.
_T975 = {
    1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 7: 2.365,
    8: 2.306, 9: 2.262, 10: 2.228, 11: 2.201, 12: 2.179, 13: 2.160,
    14: 2.145, 15: 2.131, 16: 2.120, 17: 2.110, 18: 2.101, 19: 2.093,
    20: 2.086, 21: 2.080, 22: 2.074, 23: 2.069, 24: 2.064, 25: 2.060,
    26: 2.056, 27: 2.052, 28: 2.048, 29: 2.045, 30: 2.042,
}


def mean_ci95(run_means) -> tuple[float, float]:
    """Confidence interval for the mean across run means (t-based)."""
    n = len(run_means)
    if n == 0:
        raise ValueError("no run means")
    m = sum(run_means) / n
    if n == 1:
        return m, m
    var = sum((x - m) ** 2 for x in run_means) / (n - 1)
    t = _T975.get(n - 1, 1.960)
    hw = t * math.sqrt(var / n)
    return m - hw, m + hw
