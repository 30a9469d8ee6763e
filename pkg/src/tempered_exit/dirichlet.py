"""Monte Carlo solver for the nonlocal Dirichlet problem via Feynman-Kac averaging.

``u(x0) = E[g(X_tau)] - E[int_0^tau f(X_s) ds]``, estimated over an ensemble of
exit records with a CLT error bar.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptySampleError, ExcessCensoringError
from .expr import Expr, from_descriptor
from .paths import ExitRecords, run_ensemble
from .process_model import ModelParams
from .rng import derive_seed
from .statistics import ConvergenceTable, convergence_study, z_value

CENSOR_LIMIT = 0.01


@dataclass(frozen=True)
class BoundaryData:
    g: Expr
    f: Expr | None = None
    growth_check: float | None = None  # probe radius as a multiple of the domain radius

    @classmethod
    def from_config(cls, g, f=None, growth_check=None) -> "BoundaryData":
        g = g if isinstance(g, Expr) else from_descriptor(g)
        if f is not None and not isinstance(f, Expr):
            f = from_descriptor(f)
        return cls(g, f, growth_check)


@dataclass(frozen=True)
class SolveReport:
    u_hat: float
    sample_variance: float
    ci: float
    n: int
    censored_fraction: float
    mean_g: float
    mean_f_integral: float
    confidence: float = 0.95

    @property
    def stderr(self) -> float:
        return math.sqrt(self.sample_variance / self.n)

    def as_dict(self) -> dict:
        return {
            "u_hat": self.u_hat, "sample_variance": self.sample_variance, "ci": self.ci,
            "n": self.n, "censored_fraction": self.censored_fraction, "mean_g": self.mean_g,
            "mean_f_integral": self.mean_f_integral, "confidence": self.confidence,
        }


def growth_probe(g: Expr, lam: float, dim: int, radius: float, factor: float = 10.0,
                 shells: int = 20, directions: int = 64) -> float:
    """Largest ``|g(x)| e^{-lam |x|}`` seen on shells out to ``factor * radius``.

    A value that keeps growing with the shell radius suggests ``g`` grows faster than
    ``e^{lam |x|}``.  Returns the ratio between the outer and inner half maxima.
    """
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(directions, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.linspace(radius, factor * radius, shells)
    peaks = []
    for rho in radii:
        pts = rho * dirs
        vals = np.abs(np.broadcast_to(g.evaluate(pts.T), (directions,)))
        peaks.append(float(np.max(vals)) * math.exp(-lam * rho))
    peaks = np.asarray(peaks)
    inner = peaks[: shells // 2].max()
    outer = peaks[shells // 2:].max()
    if inner == 0:
        return math.inf if outer > 0 else 1.0
    return outer / inner


def estimate(records: ExitRecords, data: BoundaryData, confidence: float = 0.95,
             censor_limit: float = CENSOR_LIMIT) -> SolveReport:
    """Feynman-Kac average over uncensored records."""
    frac = records.censored_fraction
    if frac > censor_limit:
        raise ExcessCensoringError(frac, censor_limit)
    kept = records.uncensored()
    if len(kept) < 2:
        raise EmptySampleError("fewer than two uncensored paths")
    g_vals = np.broadcast_to(np.asarray(data.g.evaluate(kept.exit_pos.T), dtype=float), (len(kept),))
    if not np.all(np.isfinite(g_vals)):
        raise ConfigError("g is not finite at every exit position")
    terms = g_vals - kept.f_integral
    mean_g = float(np.mean(g_vals))
    mean_f = float(np.mean(kept.f_integral))
    u_hat = mean_g - mean_f
    n = len(kept)
    var = float(np.sum((terms - np.mean(terms)) ** 2) / (n - 1))
    ci = z_value(confidence) * math.sqrt(var / n)
    return SolveReport(u_hat, var, ci, n, frac, mean_g, mean_f, confidence)


def solve(params: ModelParams, domain, x0, data: BoundaryData, n: int, *, seed: int = 0,
          workers: int = 1, first_index: int = 0, confidence: float = 0.95) -> SolveReport:
    if n < 2:
        raise ConfigError("n must be at least 2")
    if not bool(domain.contains(np.asarray(x0, dtype=float))):
        raise ConfigError("x0 must lie inside the domain")
    if data.growth_check:
        ratio = growth_probe(data.g, params.lam, params.dim, domain.enclosing_radius, data.growth_check)
        if ratio > 1.0:
            warnings.warn(f"g may grow faster than exp(lambda |x|) (shell ratio {ratio:.3g})", stacklevel=2)
    records = run_ensemble(params, domain, x0, n, f=data.f, seed=seed, workers=workers,
                           first_index=first_index)
    return estimate(records, data, confidence)


def error_model(report: SolveReport, n_target: int) -> float:
    """CI half-width predicted at ``n_target`` paths from the report's sample variance."""
    if report.n < 2:
        raise ConfigError("report needs at least two paths")
    return z_value(report.confidence) * math.sqrt(report.sample_variance / n_target)


def repeat_seed(seed: int, n: int, repeat: int) -> int:
    """Master seed of one independent repeat in a convergence study."""
    return derive_seed(seed, n, repeat)


def convergence(params: ModelParams, domain, x0, data: BoundaryData, n_list, repeats: int, truth: float,
                *, seed: int = 0, workers: int = 1) -> ConvergenceTable:
    """Errors of independent solves at each sample size; repeat ``j`` at size ``n``
    uses master seed ``repeat_seed(seed, n, j)``."""

    def one(n, j):
        return solve(params, domain, x0, data, n, seed=repeat_seed(seed, n, j), workers=workers).u_hat

    return convergence_study(one, n_list, repeats, truth)
