"""Binomial helpers shared by the protocol and experiment layers."""

from __future__ import annotations

import math

from scipy.stats import binomtest

Z_95 = 1.959963984540054


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        return 0.0, 1.0
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def binomial_sigma(p: float, n: int) -> float:
    """Standard deviation of the empirical rate of ``n`` Bernoulli(p) draws."""
    return math.sqrt(p * (1.0 - p) / n)
