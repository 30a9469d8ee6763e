"""Counter-based random streams (Philox4x64-10) usable inside numba kernels.

Each path owns a stream keyed by ``(master_seed, stream_index)``.  The state is
a small ``uint64`` array so that kernels can create and advance streams without
touching Python objects.  The output sequence is bit-identical to
``numpy.random.Philox(key=[master_seed, stream_index])``.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

# state layout: key0, key1, ctr0..ctr3, buf0..buf3, buffer position
STATE_SIZE = 11
_POS = 10

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


@nb.njit(inline="always")
def _round(c0, c1, c2, c3, k0, k1):
    hi0, lo0 = _mulhilo(_M0, c0)
    hi1, lo1 = _mulhilo(_M1, c2)
    return hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0


@nb.njit(nogil=True)
def _refill(state):
    # bump the 256-bit counter, then encrypt it with 10 rounds (unrolled)
    state[2] += _ONE
    if state[2] == _ZERO:
        state[3] += _ONE
        if state[3] == _ZERO:
            state[4] += _ONE
            if state[4] == _ZERO:
                state[5] += _ONE
    c0, c1, c2, c3 = state[2], state[3], state[4], state[5]
    k0, k1 = state[0], state[1]
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0; k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0; k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0; k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0; k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0; k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0; k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0; k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0; k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0; k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    state[6] = c0
    state[7] = c1
    state[8] = c2
    state[9] = c3
    state[_POS] = _ZERO


@nb.njit(nogil=True)
def init_state(state, master_seed, stream_index):
    state[0] = np.uint64(master_seed)
    state[1] = np.uint64(stream_index)
    for i in range(2, 10):
        state[i] = _ZERO
    state[_POS] = np.uint64(4)


@nb.njit(nogil=True)
def new_state(master_seed, stream_index):
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    init_state(state, master_seed, stream_index)
    return state


@nb.njit(nogil=True, inline="always")
def next_uint64(state):
    if state[_POS] >= np.uint64(4):
        _refill(state)
    pos = state[_POS]
    out = state[6 + np.int64(pos)]
    state[_POS] = pos + _ONE
    return out


@nb.njit(nogil=True, inline="always")
def next_double(state):
    """Uniform on [0, 1) with 53 random bits."""
    return np.float64(next_uint64(state) >> _S11) * _INV53


@nb.njit(nogil=True)
def next_exponential(state):
    """Exponential with mean 1 by inversion."""
    return -math.log1p(-next_double(state))


@nb.njit(nogil=True)
def next_poisson(state, mean):
    """Poisson variate by sequential inversion; large means are split into
    independent chunks of at most 16 so ``exp(-chunk)`` never underflows."""
    total = 0
    remaining = mean
    while remaining > 0.0:
        lam = min(remaining, 16.0)
        remaining -= lam
        u = next_double(state)
        p = math.exp(-lam)
        cdf = p
        k = 0
        while u >= cdf:
            k += 1
            p *= lam / k
            if p == 0.0:
                break
            cdf += p
        total += k
    return total


class RngStream:
    """Python-side handle on one counter-based stream.

    ``RngStream(seed, i)`` and the kernels' ``init_state(state, seed, i)``
    produce the same sequence, so a path simulated in a kernel can be replayed
    from Python for debugging.
    """

    def __init__(self, master_seed: int, stream_index: int = 0):
        if not (0 <= master_seed < 2**64 and 0 <= stream_index < 2**64):
            raise ValueError("seed and stream index must fit in 64 unsigned bits")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self.state = new_state(np.uint64(master_seed), np.uint64(stream_index))

    def random_raw(self, size: int) -> np.ndarray:
        return _fill_raw(self.state, size)

    def random(self, size: int | None = None):
        if size is None:
            return float(next_double(self.state))
        return _fill_double(self.state, size)

    def exponential(self, size: int | None = None):
        if size is None:
            return float(next_exponential(self.state))
        return _fill_exponential(self.state, size)

    def poisson(self, mean: float, size: int | None = None):
        if mean < 0 or not math.isfinite(mean):
            raise ValueError("Poisson mean must be finite and non-negative")
        if size is None:
            return int(next_poisson(self.state, mean))
        return _fill_poisson(self.state, mean, size)


@nb.njit(nogil=True)
def _fill_raw(state, size):
    out = np.empty(size, dtype=np.uint64)
    for i in range(size):
        out[i] = next_uint64(state)
    return out


@nb.njit(nogil=True)
def _fill_double(state, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = next_double(state)
    return out


@nb.njit(nogil=True)
def _fill_exponential(state, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = next_exponential(state)
    return out


@nb.njit(nogil=True)
def _fill_poisson(state, mean, size):
    out = np.empty(size, dtype=np.int64)
    for i in range(size):
        out[i] = next_poisson(state, mean)
    return out


def derive_seed(*words: int) -> int:
    """Collapse several integers into one 64-bit master seed."""
    return int(np.random.SeedSequence([int(w) for w in words]).generate_state(1, np.uint64)[0])
