"""Small statistical toolbox shared by the estimators.

Confidence machinery is deliberately boring: Wilson intervals for
proportions, seeded percentile bootstrap for means, Kendall's tau for trend
detection, and least squares on logs for decay rates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import kendalltau

from ..errors import InvalidArgument

# two-sided 95% normal quantile
Z95 = 1.959963984540054

BOOTSTRAP_RESAMPLES = 1000


@dataclass(frozen=True)
class EstimateWithCI:
    """Point estimate with a 95% interval and the method that produced it."""

    point: float
    ci_low: float
    ci_high: float
    n: int
    method: str

    def __post_init__(self):
        if not (self.ci_low <= self.point <= self.ci_high):
            raise InvalidArgument(
                f"interval [{self.ci_low}, {self.ci_high}] does not contain {self.point}"
            )
        if self.n < 1:
            raise InvalidArgument("n must be positive")


def wilson_interval(successes: int, n: int, z: float = Z95) -> EstimateWithCI:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise InvalidArgument("n must be positive")
    if not (0 <= successes <= n):
        raise InvalidArgument("successes must lie in [0, n]")
    p = successes / n
    denom = n + z * z
    center = (successes + 0.5 * z * z) / denom
    half = z * np.sqrt(successes * (n - successes) / n + 0.25 * z * z) / denom
    low = max(0.0, center - half)
    high = min(1.0, center + half)
    # the score interval always contains the sample proportion
    low = min(low, p)
    high = max(high, p)
    return EstimateWithCI(point=p, ci_low=low, ci_high=high, n=n, method="Wilson")


def bootstrap_mean_ci(
    samples, seed: int, n_resamples: int = BOOTSTRAP_RESAMPLES
) -> EstimateWithCI:
    """Percentile bootstrap interval for the mean of a sample."""
    samples = np.asarray(samples, dtype=float).ravel()
    n = samples.size
    if n < 1:
        raise InvalidArgument("need at least one sample")
    point = float(samples.mean())
    if n == 1:
        return EstimateWithCI(point=point, ci_low=point, ci_high=point, n=1, method="bootstrap")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    idx = rng.integers(0, n, size=(n_resamples, n))
    means = samples[idx].mean(axis=1)
    low, high = np.percentile(means, [2.5, 97.5])
    return EstimateWithCI(
        point=point,
        ci_low=min(float(low), point),
        ci_high=max(float(high), point),
        n=n,
        method="bootstrap",
    )


def increasing_trend_pvalue(times, values) -> float:
    """One-sided Mann-Kendall p-value for an increasing trend.

    Small p means the series is credibly increasing; p >= 0.05 is the
    "no growth" verdict used by the uniform-moment checks.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.size < 3:
        raise InvalidArgument("need matching series of length >= 3")
    if np.allclose(values, values[0]):
        return 1.0
    result = kendalltau(times, values, alternative="greater")
    return float(result.pvalue)


@dataclass(frozen=True)
class FitResult:
    """Least-squares decay rate of log(values): values ~ C exp(-rate t)."""

    rate: float
    stderr: float
    n_used: int


def fit_decay_rate(times, values, floor: float = 1e-12) -> FitResult:
    """Fit the exponential decay rate of a positive series by OLS on logs.

    Points at or below `floor` are dropped (they are numerically dead).
    Returns the decay rate (positive = decaying) and the standard error of
    the fitted slope.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = values > floor
    n = int(mask.sum())
    if n < 3:
        raise InvalidArgument("fewer than 3 usable points above the floor")
    t = times[mask]
    y = np.log(values[mask])
    t_bar = t.mean()
    sxx = float(np.sum((t - t_bar) ** 2))
    if sxx <= 0.0:
        raise InvalidArgument("degenerate time grid")
    slope = float(np.sum((t - t_bar) * (y - y.mean())) / sxx)
    resid = y - (y.mean() + slope * (t - t_bar))
    if n > 2:
        s2 = float(np.sum(resid**2)) / (n - 2)
    else:
        s2 = 0.0
    stderr = float(np.sqrt(s2 / sxx))
    return FitResult(rate=-slope, stderr=stderr, n_used=n)
