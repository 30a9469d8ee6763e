"""Random variate generation for the path simulators.

Scalar kernels (``_name``) are numba functions taking a stream state array
from :mod:`tempered_exit.rng`; the public wrappers accept an
:class:`~tempered_exit.rng.RngStream` and return Python values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import AttemptLimitError, ConfigError
from .process_model import AngularDensity, JumpLaw, ModelParams, SimulationMode
from .rng import RngStream, next_double, next_exponential, next_poisson

HALF_PI = 0.5 * math.pi


@nb.vectorize(["float64(float64, float64, float64, float64)"], nopython=True)
def stable_low(alpha, dt, u, w):
    """One-sided stable increment for 0 < alpha < 1 (Kanter / CMS form).

    ``u`` is uniform on (-pi/2, pi/2) and ``w`` exponential with mean 1.  The
    result has Laplace transform ``exp(-dt * s**alpha)``.
    """
    shifted = alpha * (u + HALF_PI)
    return (
        dt ** (1.0 / alpha)
        * math.sin(shifted)
        / math.cos(u) ** (1.0 / alpha)
        * (math.cos(u - shifted) / w) ** ((1.0 - alpha) / alpha)
    )


@nb.vectorize(["float64(float64, float64, float64, float64)"], nopython=True)
def stable_high(alpha, dt, u, w):
    """Totally right-skewed stable increment for 1 < alpha < 2; may be negative."""
    return (
        dt ** (1.0 / alpha)
        * math.sin(alpha * (u - HALF_PI))
        / math.cos(u) ** (1.0 / alpha)
        * (math.cos(u - alpha * (u - HALF_PI + math.pi / alpha)) / w) ** ((1.0 - alpha) / alpha)
    )


@dataclass(frozen=True)
class TemperedJumpSample:
    radius: float
    attempts: int


@nb.njit(nogil=True)
def _tempered_jump(state, alpha, lam, dt, b_trunc, reject_negative, cap):
    """Exponential-rejection tempering of a stable increment.

    Returns ``(S, attempts)``; ``attempts == -1`` signals that ``cap`` was hit.
    """
    attempts = 0
    while attempts < cap:
        attempts += 1
        u = math.pi * (next_double(state) - 0.5)
        w = next_exponential(state)
        z = next_exponential(state) / lam
        if alpha < 1.0:
            s = stable_low(alpha, dt, u, w)
            if z >= s:
                return s, attempts
        else:
            s = stable_high(alpha, dt, u, w)
            if s <= z - b_trunc and not (reject_negative and s < 0.0):
                return s, attempts
    return 0.0, -1


def tempered_jump(params: ModelParams, rng: RngStream) -> TemperedJumpSample:
    if params.mode is not SimulationMode.TIMESTEP:
        raise ConfigError("tempered_jump belongs to timestep mode")
    s, attempts = _tempered_jump(
        rng.state, params.alpha, params.lam, params.dt, params.b_trunc,
        params.reject_negative, params.attempt_cap,
    )
    if attempts < 0:
        raise AttemptLimitError(f"no acceptance within {params.attempt_cap} attempts")
    return TemperedJumpSample(float(s), int(attempts))


@nb.njit(nogil=True)
def _quantile_from_table(table, dim, p, q, out):
    """Invert the piecewise-constant CDF.

    2D: ``out[0]`` is the angle for probability ``p``.  3D: ``p`` picks the cell
    and, through its residual, the azimuth ``out[1]``; ``q`` inverts the polar
    angle ``out[0]`` within the cell (uniform in ``cos``).
    """
    k = np.searchsorted(table[:, 0], p, side="right")
    if k >= table.shape[0]:
        k = table.shape[0] - 1
    start = table[k - 1, 0] if k > 0 else 0.0
    v = (p - start) / (table[k, 0] - start)
    if v > 1.0:
        v = 1.0
    elif v < 0.0:
        v = 0.0
    if dim == 2:
        out[0] = table[k, 1] + v * (table[k, 2] - table[k, 1])
    else:
        c0 = math.cos(table[k, 1])
        c1 = math.cos(table[k, 2])
        out[0] = math.acos(c0 - q * (c0 - c1))
        out[1] = table[k, 3] + v * (table[k, 4] - table[k, 3])


@nb.njit(nogil=True)
def _sample_direction(state, table, dim, angles, direction):
    p = next_double(state)
    q = next_double(state) if dim == 3 else 0.0
    _quantile_from_table(table, dim, p, q, angles)
    if dim == 2:
        direction[0] = math.cos(angles[0])
        direction[1] = math.sin(angles[0])
    else:
        st = math.sin(angles[0])
        direction[0] = st * math.cos(angles[1])
        direction[1] = st * math.sin(angles[1])
        direction[2] = math.cos(angles[0])


def angular_quantile(angular: AngularDensity, p: float, q: float = 0.5):
    """Angle (2D) or ``(polar, azimuth)`` (3D) at cumulative probability ``p``.

    ``q`` is only used in 3D, as the within-cell probability of the polar angle.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    out = np.zeros(2)
    _quantile_from_table(angular.sampling_table(), angular.dim, float(p), float(q), out)
    return float(out[0]) if angular.dim == 2 else (float(out[0]), float(out[1]))


def sample_directions(angular: AngularDensity, rng: RngStream, size: int) -> np.ndarray:
    """``size`` unit vectors drawn from ``angular``; shape ``(size, dim)``."""
    return _sample_directions(rng.state, angular.sampling_table(), angular.dim, size)


@nb.njit(nogil=True)
def _sample_directions(state, table, dim, size):
    out = np.empty((size, dim))
    angles = np.zeros(2)
    for i in range(size):
        _sample_direction(state, table, dim, angles, out[i])
    return out


@nb.njit(nogil=True)
def _truncated_radius(state, alpha, lam, eps, method, cap):
    """Radius with density proportional to ``exp(-lam r) r^(-1-alpha)`` on ``[eps, inf)``.

    method 0: Pareto(alpha, eps) proposal, accept with ``exp(-lam (r - eps))``.
    method 1: ``eps + Exp(lam)`` proposal, accept with ``(eps / r)^(1 + alpha)``.
    Returns ``(r, attempts)`` with ``attempts == -1`` when ``cap`` is hit.
    """
    attempts = 0
    while attempts < cap:
        attempts += 1
        u = 1.0 - next_double(state)
        v = next_double(state)
        if method == 0:
            r = eps * u ** (-1.0 / alpha)
            if v < math.exp(-lam * (r - eps)):
                return r, attempts
        else:
            r = eps - math.log(u) / lam
            if v < (eps / r) ** (1.0 + alpha):
                return r, attempts
    return eps, -1


def truncated_radius(law: JumpLaw, rng: RngStream, size: int | None = None):
    p = law.params
    if size is None:
        r, attempts = _truncated_radius(rng.state, p.alpha, p.lam, law.epsilon, law.sampler_method, p.attempt_cap)
        if attempts < 0:
            raise AttemptLimitError("truncated radius sampler hit its attempt cap")
        return float(r)
    out, failed = _truncated_radii(rng.state, p.alpha, p.lam, law.epsilon, law.sampler_method, p.attempt_cap, size)
    if failed:
        raise AttemptLimitError("truncated radius sampler hit its attempt cap")
    return out


@nb.njit(nogil=True)
def _truncated_radii(state, alpha, lam, eps, method, cap, size):
    out = np.empty(size)
    for i in range(size):
        r, attempts = _truncated_radius(state, alpha, lam, eps, method, cap)
        if attempts < 0:
            return out, True
        out[i] = r
    return out, False


def poisson_count(mu_eps: float, t: float, rng: RngStream) -> int:
    mean = mu_eps * t
    if not mean >= 0:
        raise ValueError("mu_eps * t must be non-negative")
    if mean == 0:
        return 0
    return int(next_poisson(rng.state, mean))


@nb.njit(nogil=True)
def _raw_stable(state, alpha, dt, size):
    out = np.empty(size)
    for i in range(size):
        u = math.pi * (next_double(state) - 0.5)
        w = next_exponential(state)
        out[i] = stable_low(alpha, dt, u, w) if alpha < 1.0 else stable_high(alpha, dt, u, w)
    return out


def raw_stable(alpha: float, dt: float, rng: RngStream, size: int) -> np.ndarray:
    """Untempered increments (stable_low or stable_high by ``alpha``)."""
    return _raw_stable(rng.state, float(alpha), float(dt), int(size))


@nb.njit(nogil=True)
def _tempered_batch(state, alpha, lam, dt, b_trunc, reject_negative, cap, size):
    out = np.empty(size)
    att = np.empty(size, dtype=np.int64)
    for i in range(size):
        s, a = _tempered_jump(state, alpha, lam, dt, b_trunc, reject_negative, cap)
        out[i] = s
        att[i] = a
    return out, att


def tempered_jumps(params: ModelParams, rng: RngStream, size: int):
    """Vector of accepted increments and the attempt count of each."""
    s, att = _tempered_batch(
        rng.state, params.alpha, params.lam, params.dt, params.b_trunc,
        params.reject_negative, params.attempt_cap, int(size),
    )
    if np.any(att < 0):
        raise AttemptLimitError(f"no acceptance within {params.attempt_cap} attempts")
    return s, att
