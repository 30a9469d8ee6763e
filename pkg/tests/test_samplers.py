import math

import numpy as np
import pytest
from scipy import stats

from tempered_exit.errors import AttemptLimitError, ConfigError
from tempered_exit.process_model import AngularDensity, JumpLaw, ModelParams
from tempered_exit.rng import RngStream
from tempered_exit.samplers import (
    angular_quantile,
    poisson_count,
    raw_stable,
    sample_directions,
    stable_high,
    stable_low,
    tempered_jump,
    tempered_jumps,
    truncated_radius,
)

from conftest import THREE_PIECE


def test_stable_low_hand_value():
    # alpha=1/2, u=0, w=1: sin(pi/4) * cos(-pi/4) = 1/2
    assert stable_low(0.5, 1.0, 0.0, 1.0) == pytest.approx(0.5, rel=1e-15)
    assert stable_low(0.5, 4.0, 0.0, 1.0) == pytest.approx(0.5 * 16.0, rel=1e-15)


@pytest.mark.parametrize("alpha", [0.3, 0.7])
def test_one_sided_laplace_transform(alpha):
    dt = 1.0
    s_draws = raw_stable(alpha, dt, RngStream(11, 0), 10**6)
    assert np.all(s_draws > 0)
    for s in (0.5, 1.0, 2.0):
        v = np.exp(-s * s_draws)
        se = v.std(ddof=1) / math.sqrt(v.size)
        assert abs(v.mean() - math.exp(-dt * s**alpha)) < 4 * se


@pytest.mark.parametrize("alpha", [0.6, 1.4])
def test_time_scaling(alpha):
    dt = 0.01
    small = raw_stable(alpha, dt, RngStream(3, 0), 20_000) / dt ** (1 / alpha)
    unit = raw_stable(alpha, 1.0, RngStream(3, 1), 20_000)
    assert stats.ks_2samp(small, unit).pvalue > 0.001


@pytest.mark.parametrize("alpha", [0.5, 1.3, 1.7])
def test_against_scipy_levy_stable(alpha):
    dt = 0.5
    x = raw_stable(alpha, dt, RngStream(5, 2), 3000)
    scale = (dt * abs(math.cos(math.pi * alpha / 2))) ** (1 / alpha)
    dist = stats.levy_stable
    dist.parameterization = "S1"
    p = stats.kstest(x, dist(alpha, 1.0, loc=0.0, scale=scale).cdf).pvalue
    assert p > 0.001


@pytest.mark.parametrize("alpha,lam,dt", [(0.5, 1.0, 0.5), (0.7, 2.0, 0.3), (0.3, 5.0, 1.0)])
def test_acceptance_rate(alpha, lam, dt):
    p = ModelParams(alpha=alpha, lam=lam, dt=dt)
    _, att = tempered_jumps(p, RngStream(7, 0), 100_000)
    total = att.sum()
    rate = att.size / total
    expected = math.exp(-dt * lam**alpha)
    se = math.sqrt(expected * (1 - expected) / total)
    assert abs(rate - expected) < 4 * se


def test_tilted_laplace_transform():
    alpha, lam, dt = 0.6, 1.5, 0.4
    s_draws, _ = tempered_jumps(ModelParams(alpha=alpha, lam=lam, dt=dt), RngStream(8, 0), 200_000)
    for s in (0.5, 2.0):
        v = np.exp(-s * s_draws)
        se = v.std(ddof=1) / math.sqrt(v.size)
        target = math.exp(-dt * ((s + lam) ** alpha - lam**alpha))
        assert abs(v.mean() - target) < 4 * se


def test_high_alpha_rejection_window():
    p = ModelParams(alpha=1.5, lam=0.5, dt=0.01, b_trunc=2.0)
    s, att = tempered_jumps(p, RngStream(9, 0), 5000)
    assert np.all(att >= 1)
    assert np.any(s < 0)  # signed increments are kept by default
    s_pos, _ = tempered_jumps(p.replace(reject_negative=True), RngStream(9, 0), 5000)
    assert np.all(s_pos >= 0)


def test_attempt_cap():
    p = ModelParams(alpha=0.5, lam=1e6, dt=1.0, attempt_cap=10)
    with pytest.raises(AttemptLimitError):
        tempered_jump(p, RngStream(0, 0))
    with pytest.raises(ConfigError):
        tempered_jump(ModelParams(alpha=0.5, lam=1.0, mode="cp_event", epsilon=0.1), RngStream(0, 0))


def test_angular_quantiles_2d():
    # three-piece masses are 1/6, 1/2, 1/3
    assert angular_quantile(THREE_PIECE, 0.0) == pytest.approx(0.0)
    assert angular_quantile(THREE_PIECE, 1 / 6) == pytest.approx(math.pi / 2)
    assert angular_quantile(THREE_PIECE, 0.5) == pytest.approx(math.pi / 2 + math.pi / 3)
    assert angular_quantile(THREE_PIECE, 2 / 3) == pytest.approx(math.pi)
    assert angular_quantile(THREE_PIECE, 1.0) == pytest.approx(2 * math.pi)
    with pytest.raises(ValueError):
        angular_quantile(THREE_PIECE, 1.5)


def test_angular_chi_square_2d():
    d = sample_directions(THREE_PIECE, RngStream(12, 0), 60_000)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    theta = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * math.pi)
    edges = np.linspace(0, 2 * math.pi, 13)
    counts, _ = np.histogram(theta, edges)
    probs = np.array([THREE_PIECE.density_at(0.5 * (a + b)) * (b - a) for a, b in zip(edges[:-1], edges[1:])])
    assert stats.chisquare(counts, probs * d.shape[0]).pvalue > 0.01


def test_angular_chi_square_3d():
    raw = np.array([[0.5, 0.1], [0.05, 0.1]])
    band = np.array([1.0 - math.cos(math.pi / 3), math.cos(math.pi / 3) + 1.0])
    norm = float(np.sum(raw * band[:, None] * math.pi))
    cells = AngularDensity.cells([0.0, math.pi / 3, math.pi], [0.0, math.pi, 2 * math.pi],
                                 raw / norm)
    d = sample_directions(cells, RngStream(13, 0), 60_000)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    cos_edges = np.cos(np.linspace(0, math.pi, 7))[::-1]
    phi = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * math.pi)
    counts, _, _ = np.histogram2d(d[:, 2], phi, [cos_edges, [0, math.pi, 2 * math.pi]])
    # expected: density * d(cos) * d(phi) on each sub-cell
    expected = np.zeros_like(counts)
    for i, (c0, c1) in enumerate(zip(cos_edges[:-1], cos_edges[1:])):
        th = math.acos(0.5 * (c0 + c1))
        for j, ph in enumerate((0.5 * math.pi, 1.5 * math.pi)):
            expected[i, j] = cells.density_at(th, ph) * (c1 - c0) * math.pi
    assert expected.sum() == pytest.approx(1.0)
    assert stats.chisquare(counts.ravel(), expected.ravel() * d.shape[0]).pvalue > 0.01


@pytest.mark.parametrize("alpha,lam,eps", [(0.7, 0.5, 0.3), (1.5, 0.5, 0.3), (0.7, 8.0, 0.5), (1.2, 20.0, 0.2)])
def test_truncated_radius_moments(alpha, lam, eps):
    law = JumpLaw(ModelParams(alpha=alpha, lam=lam, mode="cp_event", epsilon=eps), eps)
    r = truncated_radius(law, RngStream(14, 0), 200_000)
    assert r.min() >= eps
    sq = r**2
    se = math.sqrt((law.moment(4.0) - law.moment(2.0) ** 2) / r.size)
    assert abs(sq.mean() - law.moment(2.0)) < 4 * se
    s = eps * 2.5
    p = law.tail(s)
    assert abs(np.mean(r > s) - p) < 4 * math.sqrt(p * (1 - p) / r.size)
    single = truncated_radius(law, RngStream(14, 0))
    assert single == r[0]


def test_poisson_count():
    rng = RngStream(15, 0)
    k = np.array([poisson_count(2.5, 2.0, rng) for _ in range(20_000)])
    assert abs(k.mean() - 5.0) < 4 * math.sqrt(5.0 / k.size)
    assert poisson_count(3.0, 0.0, rng) == 0
    with pytest.raises(ValueError):
        poisson_count(-1.0, 1.0, rng)


def test_vectorized_kernels_accept_arrays():
    u = np.linspace(-1.0, 1.0, 5)
    out = stable_high(1.5, 1.0, u, np.ones(5))
    assert out.shape == (5,) and np.all(np.isfinite(out))
