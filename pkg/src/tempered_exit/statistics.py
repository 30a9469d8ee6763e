"""Histogram PDF estimates, CLT intervals, tail fits and convergence studies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import EmptySampleError, InsufficientTailError

DEFAULT_BINS = 60
DEFAULT_QUANTILE = 99.5


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    n: int
    out_of_range: int

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def counts(self) -> np.ndarray:
        return np.rint(self.density * self.n * self.width).astype(np.int64)

    def mass(self) -> float:
        return float(self.density.sum() * self.width + self.out_of_range / self.n)


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    sample_variance: float
    ci_halfwidth: float
    n: int
    confidence: float = 0.95

    @property
    def stderr(self) -> float:
        return math.sqrt(self.sample_variance / self.n)

    def as_dict(self) -> dict:
        return {
            "mean": self.mean, "sample_variance": self.sample_variance,
            "ci_halfwidth": self.ci_halfwidth, "n": self.n, "confidence": self.confidence,
        }


@dataclass(frozen=True)
class TailFit:
    slope: float
    intercept: float
    r2: float
    bins_used: int


def z_value(confidence: float) -> float:
    return float(stats.norm.ppf(0.5 + 0.5 * confidence))


def estimate_pdf(samples, lo: float, hi: float, bins: int = DEFAULT_BINS) -> Histogram:
    """Equal-width histogram on ``(lo, hi]`` with density ``n_i / (n h)``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptySampleError("no samples to bin")
    if bins < 1 or not lo < hi:
        raise ValueError("need bins >= 1 and lo < hi")
    edges = np.linspace(lo, hi, bins + 1)
    inside = (x > lo) & (x <= hi)
    # right-closed bins: index i holds (edges[i], edges[i+1]]
    idx = np.searchsorted(edges, x[inside], side="left") - 1
    counts = np.bincount(idx, minlength=bins)
    h = (hi - lo) / bins
    return Histogram(edges, counts / (x.size * h), int(x.size), int(x.size - inside.sum()))


def default_tau_range(tau) -> tuple[float, float]:
    hi = float(np.percentile(tau, DEFAULT_QUANTILE))
    return 0.0, hi if hi > 0 else 1.0


def default_position_range(radius_samples, r: float) -> tuple[float, float]:
    over = np.asarray(radius_samples, dtype=float) - r
    q = float(np.percentile(over, DEFAULT_QUANTILE))
    return r, r + (q if q > 0 else 1.0)


def tail_fit(hist: Histogram, tail_from: float) -> TailFit:
    """Least-squares line through ``log(density)`` over nonempty bins with midpoint >= tail_from."""
    mid = hist.midpoints
    keep = (mid >= tail_from) & (hist.density > 0)
    if keep.sum() < 3:
        raise InsufficientTailError(f"only {int(keep.sum())} nonempty bins beyond {tail_from}")
    x = mid[keep]
    y = np.log(hist.density[keep])
    fit = stats.linregress(x, y)
    return TailFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), int(keep.sum()))


def mean_with_ci(samples, confidence: float = 0.95) -> EstimateWithError:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise EmptySampleError("need at least two samples for a variance")
    mean = float(np.mean(x))
    var = float(np.sum((x - mean) ** 2) / (x.size - 1))
    half = z_value(confidence) * math.sqrt(var / x.size)
    return EstimateWithError(mean, var, half, int(x.size), confidence)


@dataclass(frozen=True)
class ConvergenceTable:
    n_list: np.ndarray
    mean_abs_error: np.ndarray
    errors: list[np.ndarray]
    slope: float
    intercept: float


def loglog_slope(n_list, values) -> tuple[float, float]:
    slope, intercept = np.polyfit(np.log(n_list), np.log(values), 1)
    return float(slope), float(intercept)


def convergence_study(estimator: Callable[[int, int], float], n_list: Sequence[int], repeats: int,
                      truth: float) -> ConvergenceTable:
    """``estimator(n, repeat)`` returns one estimate; errors are taken against ``truth``."""
    n_arr = np.asarray(n_list, dtype=np.int64)
    if n_arr.size < 1 or np.any(np.diff(n_arr) <= 0):
        raise ValueError("n_list must be increasing")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    errors = [np.array([estimator(int(n), j) - truth for j in range(repeats)]) for n in n_arr]
    mae = np.array([np.mean(np.abs(e)) for e in errors])
    if n_arr.size >= 2 and np.all(mae > 0):
        slope, intercept = loglog_slope(n_arr, mae)
    else:
        slope, intercept = math.nan, math.nan
    return ConvergenceTable(n_arr, mae, errors, slope, intercept)


@dataclass(frozen=True)
class NormalityCheck:
    statistic: float
    pvalue: float
    mean: float
    std: float
    passed: bool


def normality_check(errors, significance: float = 0.01) -> NormalityCheck:
    """Kolmogorov-Smirnov test against the normal law fitted to ``errors``."""
    e = np.asarray(errors, dtype=float)
    mu = float(e.mean())
    sd = float(e.std(ddof=1))
    res = stats.kstest(e, "norm", args=(mu, sd))
    return NormalityCheck(float(res.statistic), float(res.pvalue), mu, sd, bool(res.pvalue > significance))
