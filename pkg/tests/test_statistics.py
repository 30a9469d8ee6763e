import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempered_exit.errors import EmptySampleError, InsufficientTailError
from tempered_exit.statistics import (
    Histogram,
    convergence_study,
    default_position_range,
    default_tau_range,
    estimate_pdf,
    loglog_slope,
    mean_with_ci,
    normality_check,
    tail_fit,
    z_value,
)


def test_single_point_single_bin():
    h = estimate_pdf([0.5, 0.5, 0.5], 0.0, 1.0, 1)
    assert h.density.tolist() == [1.0] and h.out_of_range == 0


def test_right_closed_bins():
    h = estimate_pdf([0.0, 0.5, 1.0], 0.0, 1.0, 2)
    # 0 is outside (0, 1]; 0.5 sits in the first bin (0, 0.5]; 1 in the last
    assert h.counts.tolist() == [1, 1] and h.out_of_range == 1


def test_uniform_density_flat():
    x = np.random.default_rng(0).uniform(size=10**6)
    h = estimate_pdf(x, 0.0, 1.0, 10)
    p = 0.1
    se = math.sqrt(p * (1 - p) / x.size) / h.width
    assert np.all(np.abs(h.density - 1.0) < 4 * se)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=200),
    st.floats(-10, 0), st.floats(0.1, 20), st.integers(1, 40),
)
def test_mass_conservation(samples, lo, width, bins):
    h = estimate_pdf(samples, lo, lo + width, bins)
    assert np.all(h.density >= 0)
    assert h.mass() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 3, allow_nan=False), min_size=2, max_size=100), st.randoms())
def test_permutation_invariance(samples, rnd):
    shuffled = list(samples)
    rnd.shuffle(shuffled)
    a = estimate_pdf(samples, 0.0, 2.0, 7)
    b = estimate_pdf(shuffled, 0.0, 2.0, 7)
    assert np.array_equal(a.density, b.density) and a.out_of_range == b.out_of_range


def test_pdf_errors():
    with pytest.raises(EmptySampleError):
        estimate_pdf([], 0.0, 1.0, 3)
    with pytest.raises(ValueError):
        estimate_pdf([1.0], 1.0, 1.0, 3)
    with pytest.raises(ValueError):
        estimate_pdf([1.0], 0.0, 1.0, 0)


def test_exponential_tail_slope():
    x = np.random.default_rng(1).exponential(0.5, size=10**6)
    h = estimate_pdf(x, 0.0, 5.0, 50)
    fit = tail_fit(h, 0.5)
    assert fit.slope == pytest.approx(-2.0, abs=0.05)
    assert fit.r2 > 0.99


def test_flat_tail_slope_zero():
    h = Histogram(np.linspace(0, 1, 6), np.full(5, 1.0), 100, 0)
    assert tail_fit(h, 0.0).slope == pytest.approx(0.0, abs=1e-14)


def test_tail_needs_three_bins():
    h = Histogram(np.linspace(0, 1, 6), np.array([1.0, 1.0, 0.0, 0.5, 0.0]), 100, 0)
    with pytest.raises(InsufficientTailError):
        tail_fit(h, 0.3)


def test_default_ranges():
    tau = np.arange(1, 1001, dtype=float)
    lo, hi = default_tau_range(tau)
    assert lo == 0 and hi == pytest.approx(np.percentile(tau, 99.5))
    lo, hi = default_position_range(np.ones(10), 1.0)
    assert (lo, hi) == (1.0, 2.0)


def test_constant_samples_have_zero_ci():
    est = mean_with_ci([3.0] * 10)
    assert est.mean == 3.0 and est.sample_variance == 0 and est.ci_halfwidth == 0
    with pytest.raises(EmptySampleError):
        mean_with_ci([1.0])


def test_two_pass_reference():
    x = np.random.default_rng(2).normal(1e3, 2.0, size=5000)
    est = mean_with_ci(x, 0.99)
    m = sum(x) / len(x)
    v = sum((xi - m) ** 2 for xi in x) / (len(x) - 1)
    assert est.mean == pytest.approx(m, rel=1e-12)
    assert est.sample_variance == pytest.approx(v, rel=1e-12)
    assert est.ci_halfwidth == pytest.approx(z_value(0.99) * math.sqrt(v / len(x)), rel=1e-12)


def test_ci_coverage():
    rng = np.random.default_rng(3)
    covered = 0
    for _ in range(200):
        est = mean_with_ci(rng.normal(size=10_000), 0.99)
        covered += abs(est.mean) <= est.ci_halfwidth
    assert covered >= 190


def test_ci_halves_at_four_times_n():
    a = mean_with_ci(np.random.default_rng(4).normal(size=1000))
    b = mean_with_ci(np.random.default_rng(4).normal(size=4000))
    expected = 0.5 * math.sqrt(b.sample_variance / a.sample_variance)
    assert b.ci_halfwidth / a.ci_halfwidth == pytest.approx(expected, rel=1e-12)


def test_normal_mean_convergence_slope():
    def est(n, j):
        return float(np.random.default_rng([n, j]).normal(size=n).mean())

    table = convergence_study(est, [100, 400, 1600, 6400], 200, 0.0)
    assert table.slope == pytest.approx(-0.5, abs=0.1)
    assert len(table.errors) == 4 and table.errors[0].size == 200
    with pytest.raises(ValueError):
        convergence_study(est, [400, 100], 5, 0.0)


def test_loglog_slope_exact():
    n = np.array([10.0, 100.0, 1000.0])
    slope, intercept = loglog_slope(n, 3.0 * n**-0.5)
    assert slope == pytest.approx(-0.5) and intercept == pytest.approx(math.log(3.0))


def test_normality_check():
    rng = np.random.default_rng(5)
    assert normality_check(rng.normal(2.0, 0.1, size=600)).passed
    assert not normality_check(rng.exponential(size=600)).passed
