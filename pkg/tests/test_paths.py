import math

import numpy as np
import pytest

from tempered_exit.bounds import check_P3_C4, exit_time_bound
from tempered_exit.errors import ConfigError, EvalDomainError
from tempered_exit.expr import parse
from tempered_exit.paths import run_ensemble, simulate_cp_event, simulate_free, simulate_timestep
from tempered_exit.process_model import Ball, JumpLaw, LevelSetDomain, ModelParams
from tempered_exit.rng import RngStream
from tempered_exit.samplers import sample_directions, tempered_jump, truncated_radius

from conftest import HALF_SPLIT, THREE_PIECE

BALL = Ball((0.0, 0.0), 1.0)
STEP = ModelParams(alpha=0.7, lam=1.0, dt=0.01, angular=THREE_PIECE)
CP = ModelParams(alpha=0.7, lam=0.5, mode="cp_event", epsilon=0.3)
CP_DRIFT = ModelParams(alpha=1.5, lam=0.5, mode="cp_event", epsilon=0.3, angular=HALF_SPLIT)


def _same(a, b):
    for name in ("tau", "exit_pos", "f_integral", "steps", "censored", "jump_exit"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


@pytest.mark.parametrize("params", [STEP, CP, CP_DRIFT])
def test_start_outside_exits_immediately(params):
    rec = run_ensemble(params, BALL, (1.5, 0.0), 3)
    assert np.all(rec.tau == 0) and np.all(rec.exit_pos == [1.5, 0.0]) and np.all(rec.steps == 0)


def test_constant_source_integrates_to_tau_exactly():
    rec = run_ensemble(STEP, BALL, (0.2, 0.1), 300, f="1")
    assert np.array_equal(rec.f_integral, rec.tau)
    for params in (CP, CP_DRIFT):
        rec = run_ensemble(params, BALL, (0.2, 0.1), 300, f="1")
        assert np.allclose(rec.f_integral, rec.tau, rtol=1e-14, atol=0)


def test_zero_source_gives_zero_integral():
    rec = run_ensemble(CP_DRIFT, BALL, (0.0, 0.0), 100, f="0")
    assert np.all(rec.f_integral == 0)


def test_timestep_tau_is_a_multiple_of_dt():
    rec = run_ensemble(STEP, BALL, (0.0, 0.0), 500)
    assert np.array_equal(rec.tau, rec.steps * STEP.dt)
    assert np.all(rec.tau > 0)


def test_timestep_replica_trace():
    """Replay each path with the public samplers and check the last in-domain point."""
    rec = run_ensemble(STEP, BALL, (-0.2, 0.9), 20, f="x1")
    for i in range(20):
        rng = RngStream(0, i)
        x = np.array([-0.2, 0.9])
        fsum = 0.0
        prev = x.copy()
        while BALL.contains(x):
            s = tempered_jump(STEP, rng).radius
            d = sample_directions(THREE_PIECE, rng, 1)[0]
            fsum += x[0]
            prev = x.copy()
            x = x + s * d
        assert BALL.contains(prev)
        assert np.allclose(rec.exit_pos[i], x, rtol=0, atol=1e-12)
        assert rec.f_integral[i] == pytest.approx(fsum * STEP.dt, rel=1e-12, abs=1e-15)


def test_cp_replica_trace():
    rec = run_ensemble(CP, BALL, (0.3, 0.0), 20, f="x2")
    law = JumpLaw(CP, CP.epsilon)
    for i in range(20):
        rng = RngStream(0, i)
        x = np.array([0.3, 0.0])
        t = fint = 0.0
        while BALL.contains(x):
            eta = rng.exponential() / law.intensity
            fint += x[1] * eta
            t += eta
            x = x + truncated_radius(law, rng) * sample_directions(CP.angular, rng, 1)[0]
        assert rec.tau[i] == pytest.approx(t, rel=1e-13)
        assert rec.f_integral[i] == pytest.approx(fint, rel=1e-12, abs=1e-15)
        assert np.allclose(rec.exit_pos[i], x, atol=1e-12)


@pytest.mark.parametrize("params", [STEP, CP, CP_DRIFT])
def test_single_path_matches_ensemble(params):
    rec = run_ensemble(params, BALL, (0.1, -0.4), 1, f="x1*x2", seed=42)
    sim = simulate_timestep if params.mode.value == "timestep" else simulate_cp_event
    one = sim(params, BALL, (0.1, -0.4), RngStream(42, 0), f="x1*x2")
    assert one == rec[0]
    with pytest.raises(ConfigError):
        (simulate_cp_event if sim is simulate_timestep else simulate_timestep)(
            params, BALL, (0.0, 0.0), RngStream(0, 0))


@pytest.mark.parametrize("params", [STEP, CP_DRIFT])
def test_worker_count_and_prefix_do_not_change_records(params):
    base = run_ensemble(params, BALL, (0.0, 0.0), 60, seed=7)
    _same(base, run_ensemble(params, BALL, (0.0, 0.0), 60, seed=7, workers=4))
    longer = run_ensemble(params, BALL, (0.0, 0.0), 120, seed=7, workers=3)
    _same(base, longer.select(slice(0, 60)))
    tail = run_ensemble(params, BALL, (0.0, 0.0), 20, seed=7, first_index=40)
    _same(base.select(slice(40, 60)), tail)


def test_censoring_is_flagged_not_dropped():
    rec = run_ensemble(STEP.replace(max_steps=40), BALL, (0.0, 0.0), 200)
    assert len(rec) == 200
    assert rec.censored.any() and not rec.censored.all()
    assert np.all(rec.steps[rec.censored] == 40)
    assert rec.censored_fraction == pytest.approx(rec.censored.mean())
    assert not BALL.contains(rec.uncensored().exit_pos).any()


@pytest.mark.parametrize("params", [CP, CP_DRIFT.replace(drift_correction=False)])
def test_driftless_exits_land_strictly_outside(params):
    rec = run_ensemble(params, BALL, (0.0, 0.0), 2000)
    assert rec.jump_exit.all()
    assert np.all(rec.exit_radius() > 1.0)


def test_drift_only_motion_matches_ray_exit():
    # epsilon so large that the jump clock effectively never rings
    params = ModelParams(alpha=1.5, lam=1.0, mode="cp_event", epsilon=30.0, angular=THREE_PIECE)
    law = JumpLaw(params, params.epsilon)
    assert law.intensity * 1e3 < 1e-9
    v = -law.drift
    x0 = np.array([0.3, -0.2])
    a, b, c = v @ v, 2 * x0 @ v, x0 @ x0 - 1.0
    t_exit = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
    rec = run_ensemble(params, BALL, x0, 5)
    assert np.allclose(rec.tau, t_exit, rtol=1e-12)
    assert not rec.jump_exit.any()
    assert np.all(rec.exit_radius() >= 1.0)
    assert np.allclose(rec.exit_radius(), 1.0, atol=1e-12)
    square = LevelSetDomain(parse("x1^2 + x2^2 - 1"), 2.0)
    rec_ls = run_ensemble(params, square, x0, 5)
    assert np.allclose(rec_ls.tau, t_exit, rtol=1e-12)


def test_level_set_ball_agrees_with_ball():
    disc = LevelSetDomain(parse("x1^2 + x2^2 - 1"), 1.5)
    _same(run_ensemble(STEP, BALL, (0.2, 0.2), 300), run_ensemble(STEP, disc, (0.2, 0.2), 300))
    a = run_ensemble(CP_DRIFT, BALL, (0.2, 0.2), 300)
    b = run_ensemble(CP_DRIFT, disc, (0.2, 0.2), 300)
    assert np.allclose(a.tau, b.tau, rtol=1e-10)
    assert np.array_equal(a.jump_exit, b.jump_exit)


def test_level_set_square_exits_outside():
    square = LevelSetDomain(parse("abs(x1) + abs(x2) - 1"), 1.5)
    rec = run_ensemble(CP_DRIFT, square, (0.0, 0.0), 500)
    assert not square.contains(rec.exit_pos).any()


def test_three_dimensional_paths():
    params = ModelParams(alpha=1.2, lam=1.0, dim=3, mode="cp_event", epsilon=0.2)
    ball = Ball((0.0, 0.0, 0.0), 1.0)
    rec = run_ensemble(params, ball, (0.0, 0.0, 0.0), 500)
    assert rec.exit_pos.shape == (500, 3)
    assert not ball.contains(rec.exit_pos).any()


def test_source_domain_error_propagates():
    with pytest.raises(EvalDomainError):
        run_ensemble(STEP, BALL, (0.0, 0.0), 10, f="1/(x1 - x1)")


def test_config_errors():
    with pytest.raises(ConfigError):
        run_ensemble(STEP, BALL, (0.0, 0.0, 0.0), 1)
    with pytest.raises(ConfigError):
        run_ensemble(STEP, Ball((0.0, 0.0, 0.0), 1.0), (0.0, 0.0), 1)
    with pytest.raises(ConfigError):
        run_ensemble(STEP, BALL, (0.0, 0.0), 0)


def test_dirichlet_setup_mean_exit_time_finite():
    params = ModelParams(alpha=1.2, lam=0.05, angular=THREE_PIECE)
    rec = run_ensemble(params, BALL, (-0.2, 0.9), 2000)
    assert rec.censored_fraction == 0
    assert 0 < rec.tau.mean() < math.inf


def test_mean_exit_time_below_jump_bound():
    rec = run_ensemble(CP, BALL, (0.0, 0.0), 20_000)
    tau = rec.tau
    assert tau.mean() <= exit_time_bound(CP, 1.0) + 4 * tau.std(ddof=1) / math.sqrt(tau.size)


@pytest.mark.parametrize("params", [CP, CP_DRIFT])
def test_overshoot_band_with_jump_count_factor(params):
    rec = run_ensemble(params, BALL, (0.0, 0.0), 100_000, seed=3)
    check = check_P3_C4(params, 1.0, rec, (0.5, 1.0, 2.0))
    assert check.verdict == "PASS", [(p.label, p.margin) for p in check.parts]


def test_escape_factor_band_is_violated():
    """With G = 1 - E exp(-mu tau) as the factor, the upper band fails at xi = 1."""
    rec = run_ensemble(CP, BALL, (0.0, 0.0), 100_000, seed=3)
    law = JumpLaw(CP, CP.epsilon)
    over = rec.exit_radius() - 1.0
    hit = (over > 1.0).astype(float)
    g_factor = -np.expm1(-law.intensity * rec.tau)
    diff = hit - law.tail(1.0) * g_factor
    z = diff.mean() / (diff.std(ddof=1) / math.sqrt(diff.size))
    assert z > 4.0


def test_free_positions_shape_and_symmetric_mean():
    pos = simulate_free(CP, (0.5, 1.0), 20_000, seed=1)
    assert pos.shape == (20_000, 2, 2)
    se = pos[:, 1].std(axis=0, ddof=1) / math.sqrt(20_000)
    assert np.all(np.abs(pos[:, 1].mean(axis=0)) < 4 * se)
    again = simulate_free(CP, (0.5, 1.0), 20_000, seed=1, workers=3)
    assert np.array_equal(pos, again)
    with pytest.raises(ConfigError):
        simulate_free(STEP, (1.0,), 10)
    with pytest.raises(ConfigError):
        simulate_free(CP, (1.0, 0.5), 10)
