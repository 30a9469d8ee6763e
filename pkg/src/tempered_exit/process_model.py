"""Model parameters, angular densities, domains and the radial jump law.

The jump measure in polar form is ``c * m(dir) * exp(-lam*r) * r**(-1-alpha) dr d(dir)``.
Event-driven simulation truncates it below a radius ``epsilon`` so that the
jump intensity and the compensating drift are finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .errors import ConfigError

TWO_PI = 2.0 * math.pi
_MASS_TOL = 1e-12


class SimulationMode(str, Enum):
    TIMESTEP = "timestep"
    CP_EVENT = "cp_event"


# ---------------------------------------------------------------------------
# angular density
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AngularDensity:
    """Piecewise-constant probability density of jump directions.

    In 2D the pieces are angle intervals partitioning ``[0, 2*pi)``.  In 3D the
    pieces are cells ``[th0, th1] x [ph0, ph1]`` of a (polar, azimuth) grid on
    ``[0, pi] x [0, 2*pi)``; the density is with respect to surface measure, so a
    cell carries mass ``rho * (cos th0 - cos th1) * (ph1 - ph0)``.
    """

    dim: int
    # 2D: rows of (lo, hi, density); 3D: rows of (th0, th1, ph0, ph1, density)
    pieces: np.ndarray = field(repr=False)

    def __post_init__(self):
        pieces = np.asarray(self.pieces, dtype=float)
        object.__setattr__(self, "pieces", pieces)
        if self.dim == 2:
            if pieces.ndim != 2 or pieces.shape[1] != 3:
                raise ConfigError("2D angular pieces must be rows (lo, hi, density)")
            _check_partition(pieces[:, 0], pieces[:, 1], 0.0, TWO_PI, "angle")
        elif self.dim == 3:
            if pieces.ndim != 2 or pieces.shape[1] != 5:
                raise ConfigError("3D angular cells must be rows (th0, th1, ph0, ph1, density)")
            _check_grid(pieces)
        else:
            raise ConfigError(f"unsupported dimension {self.dim}")
        if np.any(pieces[:, -1] < 0) or not np.all(np.isfinite(pieces)):
            raise ConfigError("angular density must be finite and non-negative")
        total = float(self.masses().sum())
        if abs(total - 1.0) > _MASS_TOL:
            raise ConfigError(f"angular density integrates to {total!r}, not 1")

    @classmethod
    def uniform(cls, dim: int = 2) -> "AngularDensity":
        if dim == 2:
            return cls(2, [[0.0, TWO_PI, 1.0 / TWO_PI]])
        return cls(3, [[0.0, math.pi, 0.0, TWO_PI, 1.0 / (4.0 * math.pi)]])

    @classmethod
    def piecewise(cls, pieces: Sequence[Sequence[float]]) -> "AngularDensity":
        """2D density from ``(angle_from, angle_to, density)`` triples in any order."""
        rows = sorted((float(a), float(b), float(d)) for a, b, d in pieces)
        return cls(2, rows)

    @classmethod
    def cells(cls, theta_edges, phi_edges, density) -> "AngularDensity":
        """3D density on the grid ``theta_edges x phi_edges``; ``density[i][j]``
        is the value on ``[theta_i, theta_{i+1}] x [phi_j, phi_{j+1}]``."""
        th = np.asarray(theta_edges, dtype=float)
        ph = np.asarray(phi_edges, dtype=float)
        rho = np.asarray(density, dtype=float)
        if rho.shape != (th.size - 1, ph.size - 1):
            raise ConfigError("density grid shape does not match the edges")
        rows = [
            [th[i], th[i + 1], ph[j], ph[j + 1], rho[i, j]]
            for i in range(th.size - 1)
            for j in range(ph.size - 1)
        ]
        return cls(3, rows)

    def masses(self) -> np.ndarray:
        p = self.pieces
        if self.dim == 2:
            return (p[:, 1] - p[:, 0]) * p[:, 2]
        return (np.cos(p[:, 0]) - np.cos(p[:, 1])) * (p[:, 3] - p[:, 2]) * p[:, 4]

    def sampling_table(self) -> np.ndarray:
        """Rows ``(cum_end, a0, a1, b0, b1)`` over pieces with positive mass.

        ``a`` is the angle (2D) or polar angle (3D), ``b`` the azimuth (3D only).
        """
        mass = self.masses()
        keep = mass > 0
        p = self.pieces[keep]
        cum = np.cumsum(mass[keep])
        cum /= cum[-1]
        table = np.zeros((p.shape[0], 5))
        table[:, 0] = cum
        table[:, 1] = p[:, 0]
        table[:, 2] = p[:, 1]
        if self.dim == 3:
            table[:, 3] = p[:, 2]
            table[:, 4] = p[:, 3]
        return table

    def density_at(self, angle: float, azimuth: float | None = None) -> float:
        p = self.pieces
        if self.dim == 2:
            a = angle % TWO_PI
            idx = np.nonzero((p[:, 0] <= a) & (a < p[:, 1]))[0]
            return float(p[idx[0], 2]) if idx.size else 0.0
        az = (azimuth or 0.0) % TWO_PI
        idx = np.nonzero((p[:, 0] <= angle) & (angle <= p[:, 1]) & (p[:, 2] <= az) & (az < p[:, 3]))[0]
        return float(p[idx[0], 4]) if idx.size else 0.0


def _check_partition(lo, hi, start, stop, what):
    order = np.argsort(lo)
    lo = lo[order]
    hi = hi[order]
    if np.any(hi <= lo):
        raise ConfigError(f"{what} intervals must have positive length")
    tol = 1e-12 * max(1.0, abs(stop))
    if abs(lo[0] - start) > tol or abs(hi[-1] - stop) > tol:
        raise ConfigError(f"{what} intervals must cover [{start}, {stop})")
    if np.any(np.abs(lo[1:] - hi[:-1]) > tol):
        raise ConfigError(f"{what} intervals overlap or leave gaps")


def _check_grid(cells):
    th = np.unique(np.concatenate([cells[:, 0], cells[:, 1]]))
    ph = np.unique(np.concatenate([cells[:, 2], cells[:, 3]]))
    if abs(th[0]) > 1e-12 or abs(th[-1] - math.pi) > 1e-12:
        raise ConfigError("polar edges must span [0, pi]")
    if abs(ph[0]) > 1e-12 or abs(ph[-1] - TWO_PI) > 1e-12:
        raise ConfigError("azimuth edges must span [0, 2*pi)")
    if np.any(cells[:, 1] <= cells[:, 0]) or np.any(cells[:, 3] <= cells[:, 2]):
        raise ConfigError("cells must have positive extent")
    # total solid angle of the cells must be exactly the sphere: no overlap, no gap
    solid = float(np.sum((np.cos(cells[:, 0]) - np.cos(cells[:, 1])) * (cells[:, 3] - cells[:, 2])))
    if abs(solid - 4.0 * math.pi) > 1e-9:
        raise ConfigError("cells overlap or leave gaps on the sphere")


def direction_mean(angular: AngularDensity) -> np.ndarray:
    """``b = integral of phi * m(phi)`` over the unit circle/sphere, in closed form."""
    p = angular.pieces
    if angular.dim == 2:
        lo, hi, rho = p[:, 0], p[:, 1], p[:, 2]
        bx = np.sum(rho * (np.sin(hi) - np.sin(lo)))
        by = np.sum(rho * (np.cos(lo) - np.cos(hi)))
        return np.array([bx, by])
    t0, t1, f0, f1, rho = p.T
    sin2 = (t1 - t0) / 2.0 - (np.sin(2 * t1) - np.sin(2 * t0)) / 4.0
    bx = np.sum(rho * sin2 * (np.sin(f1) - np.sin(f0)))
    by = np.sum(rho * sin2 * (np.cos(f0) - np.cos(f1)))
    bz = np.sum(rho * (np.sin(t1) ** 2 - np.sin(t0) ** 2) / 2.0 * (f1 - f0))
    return np.array([bx, by, bz])


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def default_c_norm(alpha: float) -> float:
    return float(1.0 / abs(special.gamma(-alpha)))


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    lam: float
    dim: int = 2
    angular: AngularDensity | None = None
    c_norm: float | None = None
    mode: SimulationMode = SimulationMode.TIMESTEP
    dt: float = 5e-4
    b_trunc: float = 10.0
    epsilon: float | None = None
    drift_correction: bool = True
    reject_negative: bool = False
    max_steps: int = 10**7
    attempt_cap: int = 10**6

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 < a < 2.0) or a == 1.0:
            raise ConfigError(f"alpha must lie in (0,1) or (1,2), got {a}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.dim not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dim}")
        angular = self.angular or AngularDensity.uniform(self.dim)
        if angular.dim != self.dim:
            raise ConfigError("angular density dimension does not match dim")
        object.__setattr__(self, "angular", angular)
        object.__setattr__(self, "mode", SimulationMode(self.mode))
        if self.c_norm is None:
            object.__setattr__(self, "c_norm", default_c_norm(a))
        elif not self.c_norm > 0:
            raise ConfigError("c_norm must be positive")
        if self.mode is SimulationMode.TIMESTEP:
            if not self.dt > 0:
                raise ConfigError("dt must be positive in timestep mode")
            if a > 1 and not self.b_trunc > 0:
                raise ConfigError("b_trunc must be positive")
        else:
            if self.epsilon is None or not self.epsilon > 0:
                raise ConfigError("epsilon must be positive in cp_event mode")
        if self.max_steps < 1 or self.attempt_cap < 1:
            raise ConfigError("max_steps and attempt_cap must be at least 1")

    @property
    def has_drift(self) -> bool:
        return self.mode is SimulationMode.CP_EVENT and self.alpha > 1 and self.drift_correction

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ConfigError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def enclosing_radius(self) -> float:
        return self.radius

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center)
        return np.sum(d * d, axis=-1) < self.radius**2


@dataclass(frozen=True)
class LevelSetDomain:
    """``{x : level(x) < 0}`` contained in the ball of ``bounding_radius`` about
    ``center``.  ``level`` is an :class:`~tempered_exit.expr.Expr` so that it can
    be compiled for the path kernels."""

    level: object
    bounding_radius: float
    center: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (self.bounding_radius > 0 and math.isfinite(self.bounding_radius)):
            raise ConfigError("a finite positive bounding radius is required")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def enclosing_radius(self) -> float:
        return self.bounding_radius

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center)
        inside_ball = np.sum(d * d, axis=-1) < self.bounding_radius**2
        vals = np.asarray(self.level.evaluate(np.moveaxis(x, -1, 0)))
        return inside_ball & (vals < 0)


Domain = Ball | LevelSetDomain


# ---------------------------------------------------------------------------
# radial quadrature
# ---------------------------------------------------------------------------


def tempered_power_integral(power: float, lam: float, lo: float, hi: float = math.inf) -> float:
    """``integral_lo^hi exp(-lam*r) * r**power dr`` for ``lo > 0``.

    Integrates in ``s = log(r/lo)``, which removes the endpoint singularity and
    turns the algebraic tail into an exponential one.
    """
    if not lo > 0:
        raise ConfigError("lower limit must be positive")
    if hi <= lo:
        return 0.0
    k = power + 1.0
    if lam == 0.0 and k >= 0 and math.isinf(hi):
        return math.inf
    log_lo = math.log(lo)

    def integrand(s):
        if s > 700.0:
            return 0.0
        return math.exp(k * (log_lo + s) - lam * lo * math.exp(s))

    s_max = math.log(hi / lo) if math.isfinite(hi) else math.inf
    # split at the integrand peak so quad sees each monotone side separately
    pieces = [0.0]
    if lam > 0 and k > 0:
        peak = math.log(k / (lam * lo))
        if 0.0 < peak < s_max:
            pieces.append(peak)
    pieces.append(s_max)
    total = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=500)
        total += val
    return total


def _require_epsilon(epsilon: float) -> float:
    if epsilon is None or not epsilon > 0:
        raise ConfigError("epsilon must be positive: the jump intensity diverges at 0")
    return float(epsilon)


def renewal_intensity(params: ModelParams, epsilon: float | None = None) -> float:
    """Jump rate ``mu_eps = c * integral_eps^inf exp(-lam r) r^(-1-alpha) dr``."""
    eps = _require_epsilon(params.epsilon if epsilon is None else epsilon)
    return params.c_norm * tempered_power_integral(-1.0 - params.alpha, params.lam, eps)


def radial_tail(params: ModelParams, epsilon: float | None, s: float) -> float:
    """``P(|Z| > s)`` under the law truncated to ``[epsilon, inf)``."""
    eps = _require_epsilon(params.epsilon if epsilon is None else epsilon)
    if s <= eps:
        return 1.0
    num = tempered_power_integral(-1.0 - params.alpha, params.lam, s)
    return num / tempered_power_integral(-1.0 - params.alpha, params.lam, eps)


def radial_partial_moment(params: ModelParams, epsilon: float | None, q: float, lo: float = 0.0) -> float:
    """``E[|Z|^q ; |Z| > lo]``."""
    eps = _require_epsilon(params.epsilon if epsilon is None else epsilon)
    if q < 0:
        raise ConfigError("moment order must be non-negative")
    norm = tempered_power_integral(-1.0 - params.alpha, params.lam, eps)
    return tempered_power_integral(q - 1.0 - params.alpha, params.lam, max(lo, eps)) / norm


def radial_moment(params: ModelParams, epsilon: float | None, q: float) -> float:
    """``E[|Z|^q]`` of the truncated radial law."""
    if q == 0:
        return 1.0
    return radial_partial_moment(params, epsilon, q)


def radial_exp_moment(params: ModelParams, epsilon: float | None, beta: float) -> float:
    """``E[exp(beta |Z|)]``; finite for ``beta <= lam``."""
    eps = _require_epsilon(params.epsilon if epsilon is None else epsilon)
    if beta > params.lam:
        raise ConfigError("exponential moment diverges for beta > lambda")
    a = -1.0 - params.alpha
    return tempered_power_integral(a, params.lam - beta, eps) / tempered_power_integral(a, params.lam, eps)


def drift_vector(params: ModelParams, epsilon: float | None = None) -> np.ndarray:
    """Compensating drift ``b_bar_eps`` of the truncated representation (1 < alpha < 2).

    ``b_bar = c * b * (Gamma(1-alpha) lam^(alpha-1) - integral_eps^1 exp(-lam r) r^(-alpha) dr)``;
    the integral is empty when ``eps >= 1``.
    """
    if params.alpha < 1:
        raise ConfigError("the drift term exists only for 1 < alpha < 2")
    eps = _require_epsilon(params.epsilon if epsilon is None else epsilon)
    b = direction_mean(params.angular)
    gamma_term = special.gamma(1.0 - params.alpha) * params.lam ** (params.alpha - 1.0)
    small = tempered_power_integral(-params.alpha, params.lam, eps, 1.0) if eps < 1.0 else 0.0
    return params.c_norm * b * (gamma_term - small)


@dataclass(frozen=True)
class JumpLaw:
    """Truncated jump law used by the event-driven simulator."""

    params: ModelParams
    epsilon: float

    def __post_init__(self):
        _require_epsilon(self.epsilon)

    @property
    def intensity(self) -> float:
        return renewal_intensity(self.params, self.epsilon)

    @property
    def drift(self) -> np.ndarray:
        if not self.params.has_drift:
            return np.zeros(self.params.dim)
        return drift_vector(self.params, self.epsilon)

    @property
    def sampler_method(self) -> int:
        """0: Pareto envelope, 1: shifted exponential envelope."""
        return 0 if self.params.lam * self.epsilon <= 1.0 else 1

    def tail(self, s: float) -> float:
        return radial_tail(self.params, self.epsilon, s)

    def moment(self, q: float) -> float:
        return radial_moment(self.params, self.epsilon, q)

    def mean_jump(self) -> np.ndarray:
        """``E[Z]`` as a vector: ``E[r] * b``."""
        return self.moment(1.0) * direction_mean(self.params.angular)
