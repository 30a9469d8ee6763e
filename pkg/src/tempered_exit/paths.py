"""Path simulation and first-exit detection.

Two simulators share one record format:

* timestep mode follows the fixed-step scheme ``X += S * dir`` with tempered
  stable radii ``S`` and stops at the first sampled point outside the domain;
* cp_event mode runs the truncated compound-Poisson representation, moving
  linearly with velocity ``-b_bar`` between jumps and locating drift exits
  exactly.

Path ``i`` of an ensemble always uses stream ``(seed, i)``, so results do not
depend on how paths are split among workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import AttemptLimitError, ConfigError, EvalDomainError
from .expr import Expr, from_descriptor
from .process_model import Ball, JumpLaw, LevelSetDomain, ModelParams, SimulationMode
from .rng import STATE_SIZE, RngStream, init_state, next_exponential, next_poisson
from .samplers import _sample_direction, _tempered_jump, _truncated_radius

EXITED = 0
CENSORED = 1
ATTEMPT_LIMIT = 2
F_DOMAIN = 3

_GAUSS_OFFSET = 0.5 / math.sqrt(3.0)
_LEVEL_SCAN = 32


@dataclass(frozen=True)
class ExitRecord:
    tau: float
    exit_pos: tuple[float, ...]
    f_integral: float
    steps: int
    censored: bool
    jump_exit: bool


@dataclass
class ExitRecords:
    """Columnar ensemble of exit records, in stream-index order."""

    tau: np.ndarray
    exit_pos: np.ndarray
    f_integral: np.ndarray
    steps: np.ndarray
    censored: np.ndarray
    jump_exit: np.ndarray

    def __len__(self) -> int:
        return self.tau.size

    def __getitem__(self, i: int) -> ExitRecord:
        return ExitRecord(
            float(self.tau[i]), tuple(float(v) for v in self.exit_pos[i]),
            float(self.f_integral[i]), int(self.steps[i]),
            bool(self.censored[i]), bool(self.jump_exit[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean()) if len(self) else 0.0

    def select(self, mask) -> "ExitRecords":
        return ExitRecords(
            self.tau[mask], self.exit_pos[mask], self.f_integral[mask],
            self.steps[mask], self.censored[mask], self.jump_exit[mask],
        )

    def uncensored(self) -> "ExitRecords":
        return self.select(~self.censored)

    def exit_radius(self, center=None) -> np.ndarray:
        c = np.zeros(self.exit_pos.shape[1]) if center is None else np.asarray(center)
        return np.linalg.norm(self.exit_pos - c, axis=1)

    @classmethod
    def empty(cls, n: int, dim: int) -> "ExitRecords":
        return cls(
            np.zeros(n), np.zeros((n, dim)), np.zeros(n),
            np.zeros(n, dtype=np.int64), np.zeros(n, dtype=bool), np.zeros(n, dtype=bool),
        )


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@nb.njit(nogil=True)
def _zero_fn(x):
    return 0.0


@nb.njit(nogil=True, inline="always")
def _inside(x, kind, center, radius, level_fn):
    d2 = 0.0
    for k in range(x.shape[0]):
        d = x[k] - center[k]
        d2 += d * d
    if d2 >= radius * radius:
        return False
    if kind == 0:
        return True
    return level_fn(x) < 0.0


@nb.njit(nogil=True)
def _timestep_path(state, x, alpha, lam, dt, b_trunc, reject_negative, cap, max_steps,
                   table, dim, kind, center, radius, level_fn, use_f, f_fn, angles, direction):
    """Advance ``x`` in place; returns ``(tau, f_integral, steps, status)``."""
    if not _inside(x, kind, center, radius, level_fn):
        return 0.0, 0.0, 0, EXITED
    f_sum = 0.0
    steps = 0
    while steps < max_steps:
        s, attempts = _tempered_jump(state, alpha, lam, dt, b_trunc, reject_negative, cap)
        if attempts < 0:
            return steps * dt, f_sum * dt, steps, ATTEMPT_LIMIT
        _sample_direction(state, table, dim, angles, direction)
        if use_f:
            fv = f_fn(x)
            if not math.isfinite(fv):
                return steps * dt, f_sum * dt, steps, F_DOMAIN
            f_sum += fv
        for k in range(dim):
            x[k] += s * direction[k]
        steps += 1
        if not _inside(x, kind, center, radius, level_fn):
            return steps * dt, f_sum * dt, steps, EXITED
    return steps * dt, f_sum * dt, steps, CENSORED


@nb.njit(nogil=True)
def _advance_outside(x, vel, s, kind, center, radius, level_fn, tmp):
    """Nudge ``s`` upward until ``x + vel*s`` lies outside the domain."""
    step = max(abs(s) * 2e-16, 1e-300)
    for _ in range(200):
        for k in range(x.shape[0]):
            tmp[k] = x[k] + vel[k] * s
        if not _inside(tmp, kind, center, radius, level_fn):
            return s
        s += step
        step *= 2.0
    return s


@nb.njit(nogil=True)
def _drift_exit(x, vel, duration, kind, center, radius, level_fn, tmp):
    """Time at which ``x + vel*s`` first leaves the domain for ``s`` in (0, duration],
    or -1 if it stays inside."""
    dim = x.shape[0]
    if kind == 0:
        a = 0.0
        b = 0.0
        c = -radius * radius
        for k in range(dim):
            d = x[k] - center[k]
            a += vel[k] * vel[k]
            b += 2.0 * d * vel[k]
            c += d * d
        if a == 0.0:
            return -1.0
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            disc = 0.0
        root = math.sqrt(disc)
        # positive root of a s^2 + b s + c with c < 0, in cancellation-free form
        if b <= 0.0:
            s = (-b + root) / (2.0 * a)
        else:
            s = (2.0 * -c) / (b + root)
        if s > duration:
            return -1.0
        return _advance_outside(x, vel, s, kind, center, radius, level_fn, tmp)
    prev = 0.0
    for j in range(1, _LEVEL_SCAN + 1):
        s = duration * j / _LEVEL_SCAN
        for k in range(dim):
            tmp[k] = x[k] + vel[k] * s
        if not _inside(tmp, kind, center, radius, level_fn):
            lo = prev
            hi = s
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                for k in range(dim):
                    tmp[k] = x[k] + vel[k] * mid
                if _inside(tmp, kind, center, radius, level_fn):
                    lo = mid
                else:
                    hi = mid
            return hi
        prev = s
    return -1.0


@nb.njit(nogil=True)
def _segment_integral(f_fn, x, vel, length, tmp):
    """Two-point Gauss rule for the integral of f along ``x + vel*s``, s in [0, length]."""
    total = 0.0
    for node in (0.5 - _GAUSS_OFFSET, 0.5 + _GAUSS_OFFSET):
        for k in range(x.shape[0]):
            tmp[k] = x[k] + vel[k] * (node * length)
        total += f_fn(tmp)
    return 0.5 * length * total


@nb.njit(nogil=True)
def _cp_path(state, x, alpha, lam, eps, method, mu, vel, has_drift, cap, max_jumps,
             table, dim, kind, center, radius, level_fn, use_f, f_fn, angles, direction, tmp):
    """Returns ``(tau, f_integral, jumps, status, jump_exit)``; ``x`` ends at the exit point."""
    if not _inside(x, kind, center, radius, level_fn):
        return 0.0, 0.0, 0, EXITED, False
    t = 0.0
    fint = 0.0
    jumps = 0
    while jumps < max_jumps:
        eta = next_exponential(state) / mu
        if has_drift:
            s_exit = _drift_exit(x, vel, eta, kind, center, radius, level_fn, tmp)
            seg = s_exit if s_exit >= 0.0 else eta
            if use_f:
                fv = _segment_integral(f_fn, x, vel, seg, tmp)
                if not math.isfinite(fv):
                    return t, fint, jumps, F_DOMAIN, False
                fint += fv
            for k in range(dim):
                x[k] += vel[k] * seg
            t += seg
            if s_exit >= 0.0:
                return t, fint, jumps, EXITED, False
        else:
            if use_f:
                fv = f_fn(x)
                if not math.isfinite(fv):
                    return t, fint, jumps, F_DOMAIN, False
                fint += fv * eta
            t += eta
        r, attempts = _truncated_radius(state, alpha, lam, eps, method, cap)
        if attempts < 0:
            return t, fint, jumps, ATTEMPT_LIMIT, False
        _sample_direction(state, table, dim, angles, direction)
        for k in range(dim):
            x[k] += r * direction[k]
        jumps += 1
        if not _inside(x, kind, center, radius, level_fn):
            return t, fint, jumps, EXITED, True
    return t, fint, jumps, CENSORED, False


@nb.njit(nogil=True)
def _timestep_block(seed, start, stop, x0, alpha, lam, dt, b_trunc, reject_negative, cap, max_steps,
                    table, dim, kind, center, radius, level_fn, use_f, f_fn,
                    tau, pos, fint, steps, status):
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    x = np.empty(dim)
    angles = np.zeros(2)
    direction = np.zeros(dim)
    for i in range(start, stop):
        init_state(state, seed, np.uint64(i))
        x[:] = x0
        t, fi, k, st = _timestep_path(state, x, alpha, lam, dt, b_trunc, reject_negative, cap, max_steps,
                                      table, dim, kind, center, radius, level_fn, use_f, f_fn, angles, direction)
        tau[i] = t
        pos[i, :] = x
        fint[i] = fi
        steps[i] = k
        status[i] = st


@nb.njit(nogil=True)
def _cp_block(seed, start, stop, x0, alpha, lam, eps, method, mu, vel, has_drift, cap, max_jumps,
              table, dim, kind, center, radius, level_fn, use_f, f_fn,
              tau, pos, fint, steps, status, jump_exit):
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    x = np.empty(dim)
    angles = np.zeros(2)
    direction = np.zeros(dim)
    tmp = np.zeros(dim)
    for i in range(start, stop):
        init_state(state, seed, np.uint64(i))
        x[:] = x0
        t, fi, k, st, jx = _cp_path(state, x, alpha, lam, eps, method, mu, vel, has_drift, cap, max_jumps,
                                    table, dim, kind, center, radius, level_fn, use_f, f_fn,
                                    angles, direction, tmp)
        tau[i] = t
        pos[i, :] = x
        fint[i] = fi
        steps[i] = k
        status[i] = st
        jump_exit[i] = jx


@nb.njit(nogil=True)
def _free_block(seed, start, stop, x0, times, alpha, lam, eps, method, mu, vel, has_drift, cap,
                table, dim, out):
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    x = np.empty(dim)
    angles = np.zeros(2)
    direction = np.zeros(dim)
    for i in range(start, stop):
        init_state(state, seed, np.uint64(i))
        x[:] = x0
        t_prev = 0.0
        for j in range(times.shape[0]):
            span = times[j] - t_prev
            count = next_poisson(state, mu * span)
            for _ in range(count):
                r, attempts = _truncated_radius(state, alpha, lam, eps, method, cap)
                if attempts < 0:
                    return False
                _sample_direction(state, table, dim, angles, direction)
                for k in range(dim):
                    x[k] += r * direction[k]
            if has_drift:
                for k in range(dim):
                    x[k] += vel[k] * span
            out[i, j, :] = x
            t_prev = times[j]
    return True


# ---------------------------------------------------------------------------
# Python-facing API
# ---------------------------------------------------------------------------


def _domain_args(domain, dim):
    if domain.dim != dim:
        raise ConfigError(f"domain dimension {domain.dim} does not match model dimension {dim}")
    center = np.asarray(domain.center, dtype=float)
    if isinstance(domain, Ball):
        return 0, center, float(domain.radius), _zero_fn
    if isinstance(domain, LevelSetDomain):
        level = domain.level
        if isinstance(level, Expr):
            level = level.compile_numba()
        return 1, center, float(domain.bounding_radius), level
    raise ConfigError(f"unsupported domain {domain!r}")


def _f_args(f):
    if f is None:
        return False, _zero_fn
    if isinstance(f, (int, float, str, dict)):
        f = from_descriptor(f)
    if isinstance(f, Expr):
        if f.is_constant() and f.evaluate(()) == 0.0:
            return False, _zero_fn
        return True, f.compile_numba()
    return True, f  # assumed to be an njit function of the coordinate vector


def _check_x0(x0, dim):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (dim,):
        raise ConfigError(f"x0 must have {dim} coordinates")
    return x0


def _raise_status(status):
    if np.any(status == ATTEMPT_LIMIT):
        raise AttemptLimitError("a rejection sampler hit its attempt cap; parameters look pathological")
    if np.any(status == F_DOMAIN):
        raise EvalDomainError("the source term f evaluated to a non-finite value along a path")


def _run_blocks(fn, n, workers, first_index):
    workers = max(1, min(int(workers), n))
    bounds = np.linspace(first_index, first_index + n, workers + 1).astype(np.int64)
    if workers == 1:
        fn(int(bounds[0]), int(bounds[1]))
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        for fut in futures:
            fut.result()


def run_ensemble(params: ModelParams, domain, x0, n: int, f=None, *, seed: int = 0,
                 workers: int = 1, first_index: int = 0) -> ExitRecords:
    """Simulate ``n`` independent paths on streams ``(seed, first_index + i)``."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    dim = params.dim
    x0 = _check_x0(x0, dim)
    kind, center, radius, level_fn = _domain_args(domain, dim)
    use_f, f_fn = _f_args(f)
    table = params.angular.sampling_table()
    total = first_index + n
    rec = ExitRecords.empty(total, dim)
    status = np.zeros(total, dtype=np.int64)
    seed = np.uint64(seed)

    if params.mode is SimulationMode.TIMESTEP:
        def block(a, b):
            _timestep_block(seed, a, b, x0, params.alpha, params.lam, params.dt, params.b_trunc,
                            params.reject_negative, params.attempt_cap, params.max_steps,
                            table, dim, kind, center, radius, level_fn, use_f, f_fn,
                            rec.tau, rec.exit_pos, rec.f_integral, rec.steps, status)
    else:
        law = JumpLaw(params, params.epsilon)
        vel = -law.drift
        mu = law.intensity

        def block(a, b):
            _cp_block(seed, a, b, x0, params.alpha, params.lam, law.epsilon, law.sampler_method, mu,
                      vel, params.has_drift, params.attempt_cap, params.max_steps,
                      table, dim, kind, center, radius, level_fn, use_f, f_fn,
                      rec.tau, rec.exit_pos, rec.f_integral, rec.steps, status, rec.jump_exit)

    _run_blocks(block, n, workers, first_index)
    out = rec.select(slice(first_index, total))
    status = status[first_index:]
    _raise_status(status)
    out.censored = status == CENSORED
    if params.mode is SimulationMode.TIMESTEP:
        # every timestep exit is a jump exit unless the path started outside
        out.jump_exit = (status == EXITED) & (out.tau > 0)
    return out


def _single(params, domain, x0, rng: RngStream, f, mode):
    if params.mode is not mode:
        raise ConfigError(f"parameters are in {params.mode.value} mode")
    dim = params.dim
    x = _check_x0(x0, dim).copy()
    kind, center, radius, level_fn = _domain_args(domain, dim)
    use_f, f_fn = _f_args(f)
    table = params.angular.sampling_table()
    angles = np.zeros(2)
    direction = np.zeros(dim)
    if mode is SimulationMode.TIMESTEP:
        tau, fint, steps, status = _timestep_path(
            rng.state, x, params.alpha, params.lam, params.dt, params.b_trunc, params.reject_negative,
            params.attempt_cap, params.max_steps, table, dim, kind, center, radius, level_fn,
            use_f, f_fn, angles, direction)
        jump_exit = status == EXITED and tau > 0
    else:
        law = JumpLaw(params, params.epsilon)
        tau, fint, steps, status, jump_exit = _cp_path(
            rng.state, x, params.alpha, params.lam, law.epsilon, law.sampler_method, law.intensity,
            -law.drift, params.has_drift, params.attempt_cap, params.max_steps, table, dim,
            kind, center, radius, level_fn, use_f, f_fn, angles, direction, np.zeros(dim))
    _raise_status(np.array([status]))
    return ExitRecord(float(tau), tuple(float(v) for v in x), float(fint), int(steps),
                      status == CENSORED, bool(jump_exit))


def simulate_timestep(params: ModelParams, domain, x0, rng: RngStream, f=None) -> ExitRecord:
    return _single(params, domain, x0, rng, f, SimulationMode.TIMESTEP)


def simulate_cp_event(params: ModelParams, domain, x0, rng: RngStream, f=None) -> ExitRecord:
    return _single(params, domain, x0, rng, f, SimulationMode.CP_EVENT)


def simulate_free(params: ModelParams, times, n: int, x0=None, *, seed: int = 0,
                  workers: int = 1) -> np.ndarray:
    """Positions of ``n`` unconfined cp_event paths at ``times``; shape ``(n, len(times), dim)``."""
    if params.mode is not SimulationMode.CP_EVENT:
        raise ConfigError("free runs use the compound-Poisson representation")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] <= 0:
        raise ConfigError("times must be positive and strictly increasing")
    dim = params.dim
    x0 = np.zeros(dim) if x0 is None else _check_x0(x0, dim)
    law = JumpLaw(params, params.epsilon)
    table = params.angular.sampling_table()
    out = np.zeros((n, times.size, dim))
    failed = []
    seed = np.uint64(seed)

    def block(a, b):
        ok = _free_block(seed, a, b, x0, times, params.alpha, params.lam, law.epsilon, law.sampler_method,
                         law.intensity, -law.drift, params.has_drift, params.attempt_cap, table, dim, out)
        if not ok:
            failed.append((a, b))

    _run_blocks(block, n, workers, 0)
    if failed:
        raise AttemptLimitError("truncated radius sampler hit its attempt cap")
    return out
