import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftql.dynamics import (
    SCHEDULE_TOL,
    FeedbackChannel,
    LearnerState,
    NoiseModel,
    Schedule,
    ftql_step,
    iwe_estimate,
    logged_stages,
    realized_feedback,
    sample_actions,
    sampling_strategy,
    simulate,
    vector_feedback,
)
from ftql.game import quantize_game
from ftql.quantize import QuantizationScheme, even_away, half_away, identity
from ftql.regularizer import ENTROPIC, EUCLIDEAN, initial_scores_for


def state_from(x, r=ENTROPIC, sch=None, bandit=False):
    return LearnerState.from_scores([initial_scores_for(r, xi) for xi in x], r, sch, bandit)


# -- schedules and noise ----------------------------------------------------


def test_schedule_values():
    sch = Schedule(g0=0.5, p=0.75, e0=0.8, q=0.25)
    assert sch.step(1) == 0.5
    assert sch.step(16) == pytest.approx(0.5 / 8)
    assert sch.exploration(16) == pytest.approx(0.4)


def test_schedule_validity_grid():
    for p in np.linspace(0, 1, 101):
        for q in np.linspace(0, 1, 101):
            expected = p <= 1 and p + q > 1 + SCHEDULE_TOL and 2 * p - 2 * q > 1 + SCHEDULE_TOL
            assert Schedule(p=p, q=q).valid == expected


def test_fig1_schedule_flagged_but_usable():
    sch = Schedule(p=0.75, q=0.25)
    assert not sch.valid
    assert "2p - 2q > 1" in sch.warning()
    assert Schedule(p=0.9, q=0.2).valid and Schedule(p=0.9, q=0.2).warning() is None


@pytest.mark.parametrize("kw", [{"g0": 0}, {"p": 1.5}, {"e0": 0}, {"e0": 1.5}, {"q": -0.1}])
def test_schedule_rejects(kw):
    with pytest.raises(ValueError):
        Schedule(**kw)


def test_noise_models(rng):
    assert NoiseModel("uniform", 0.3).variance == pytest.approx(0.03)
    assert NoiseModel("gaussian", 0.5).variance == 0.25
    draws = NoiseModel("uniform", 0.1).sample(rng, 100_000)
    assert np.all(np.abs(draws) <= 0.1)
    assert abs(draws.mean()) < 1e-3
    assert draws.var() == pytest.approx(0.1**2 / 3, rel=0.02)
    g = NoiseModel("gaussian", 2.0).sample(rng, 100_000)
    assert abs(g.mean()) < 0.03 and g.std() == pytest.approx(2.0, rel=0.02)
    with pytest.raises(ValueError):
        NoiseModel("none", 1.0)


def test_exact_channel_takes_no_quantizer_or_noise():
    with pytest.raises(ValueError):
        FeedbackChannel("exact-vector", half_away(1.0))
    with pytest.raises(ValueError):
        FeedbackChannel("exact-vector", noise=NoiseModel("uniform", 0.1))
    with pytest.raises(ValueError):
        FeedbackChannel("full-info")


# -- estimator pieces ------------------------------------------------------


def test_sampling_strategy():
    np.testing.assert_allclose(sampling_strategy([1, 0], 0.5), [0.75, 0.25])
    np.testing.assert_array_equal(sampling_strategy([0.3, 0.7], 0.0), [0.3, 0.7])
    np.testing.assert_allclose(sampling_strategy([0.6, 0.4], 0.1), [0.59, 0.41])
    with pytest.raises(ValueError):
        sampling_strategy([1, 0], 1.1)


@settings(max_examples=200, deadline=None)
@given(w=st.lists(st.floats(0, 1), min_size=2, max_size=6).filter(lambda w: sum(w) > 0), eps=st.floats(0, 1))
def test_sampling_floor(w, eps):
    x = np.array(w) / sum(w)
    xh = sampling_strategy(x, eps)
    assert np.all(xh >= eps / len(x) - 1e-15)
    assert xh.sum() == pytest.approx(1.0)


def test_sample_actions_inverse_cdf():
    x_hat = [np.array([0.25, 0.75]), np.array([0.5, 0.2, 0.3])]
    a = sample_actions(x_hat, np.array([[0.1, 0.6], [0.3, 0.69], [0.9999, 0.0]]))
    np.testing.assert_array_equal(a, [[0, 1], [1, 1], [1, 0]])


def test_realized_feedback(fig1_game, ex2_game):
    exact = FeedbackChannel("bandit-iwe")
    np.testing.assert_array_equal(realized_feedback(fig1_game, (0, 1), exact), [2.4, 2.4])
    q4 = FeedbackChannel("bandit-iwe", QuantizationScheme("half-away", 4.0))
    np.testing.assert_array_equal(realized_feedback(fig1_game, (0, 0), q4), [4.0, 4.0])
    q1 = FeedbackChannel("bandit-iwe", half_away(1.0))
    np.testing.assert_array_equal(realized_feedback(ex2_game, (0, 1), q1), [1.0, 1.0])


def test_realized_feedback_noise_is_player_major(fig1_game):
    ch = FeedbackChannel("bandit-iwe", noise=NoiseModel("uniform", 0.1))
    a = (0, 0)
    got = realized_feedback(fig1_game, a, ch, rng=np.random.default_rng(3))
    u = np.random.default_rng(3).random(2)
    np.testing.assert_allclose(got, 5.1 + 0.1 * (2 * u - 1))


def test_iwe_estimate():
    np.testing.assert_array_equal(iwe_estimate(0, 0, 1.0, [0.5, 0.5]), [2.0, 0.0])
    np.testing.assert_array_equal(iwe_estimate(0, 1, 0.0, [0.5, 0.5]), [0.0, 0.0])
    np.testing.assert_allclose(iwe_estimate(0, 0, 99.0, [0.55, 0.45]), [180.0, 0.0])
    with pytest.raises(ValueError, match="player 1"):
        iwe_estimate(1, 1, 1.0, [1.0, 0.0])


def test_vector_feedback(ex1_game):
    ch1 = FeedbackChannel("quantized-vector", half_away(1.0))
    v = vector_feedback(ex1_game, [[0.8, 0.2], [0.2, 0.8]], ch1)
    np.testing.assert_array_equal(v[0], [101.0, 99.0])
    ch2 = FeedbackChannel("quantized-vector", even_away(1.0))
    v = vector_feedback(ex1_game, [[0.3, 0.7], [0.65, 0.35]], ch2)
    np.testing.assert_array_equal(v[0], [100.0, 100.0])
    exact = vector_feedback(ex1_game, [[0.3, 0.7], [0.2, 0.8]], FeedbackChannel())
    np.testing.assert_allclose(exact[0], [100.54, 99.46])
    with pytest.raises(ValueError):
        vector_feedback(ex1_game, [[0.3, 0.7], [0.2, 0.8]], FeedbackChannel("bandit-iwe"))


# -- stepping -----------------------------------------------------------------


def test_example1_freeze_one_step(ex1_game, rng):
    ch = FeedbackChannel("quantized-vector", even_away(1.0))
    for _ in range(50):
        x = [rng.dirichlet([1, 1]), rng.dirichlet([1, 1])]
        s0 = state_from(x)
        s1 = ftql_step(s0, ex1_game, ENTROPIC, Schedule(), ch)
        for a, b in zip(s0.x, s1.x):
            np.testing.assert_array_equal(a, b)
        assert s1.n == 2


def test_example1_score_gap_grows_by_two(ex1_game):
    ch = FeedbackChannel("quantized-vector", half_away(1.0))
    s = state_from([[0.8, 0.2], [0.2, 0.8]])
    gap0 = s.y[0][0] - s.y[0][1]
    s = ftql_step(s, ex1_game, ENTROPIC, Schedule(), ch)
    assert s.y[0][0] - s.y[0][1] - gap0 == pytest.approx(2.0, abs=1e-12)


def test_full_exploration_is_uniform(fig1_game):
    s = LearnerState.from_scores([np.array([5.0, -5.0])] * 2, ENTROPIC, Schedule(), bandit=True)
    for xh in s.x_hat:
        np.testing.assert_array_equal(xh, [0.5, 0.5])


def test_bandit_step_needs_rng(fig1_game):
    s = LearnerState.from_scores([np.zeros(2)] * 2, ENTROPIC, Schedule(), bandit=True)
    with pytest.raises(ValueError):
        ftql_step(s, fig1_game, ENTROPIC, Schedule(), FeedbackChannel("bandit-iwe"))


def test_state_invariant_after_steps(fig1_game):
    sch = Schedule(p=0.75, q=0.25)
    ch = FeedbackChannel("bandit-iwe", half_away(1.5), NoiseModel("uniform", 0.1))
    rng = np.random.default_rng(0)
    s = LearnerState.from_scores([rng.random(2), rng.random(2)], ENTROPIC, sch, bandit=True)
    for _ in range(100):
        s = ftql_step(s, fig1_game, ENTROPIC, sch, ch, rng)
        eps = sch.exploration(s.n)
        for xi, xh in zip(s.x, s.x_hat):
            np.testing.assert_allclose(xi.sum(), 1.0)
            np.testing.assert_allclose(xh, (1 - eps) * xi + eps / 2)


# -- trajectories -------------------------------------------------------------


def test_logged_stages():
    np.testing.assert_array_equal(logged_stages(25, 10), [1, 10, 20, 25])
    np.testing.assert_array_equal(logged_stages(3, 1), [1, 2, 3])
    with pytest.raises(ValueError):
        logged_stages(0, 1)


def fig1_batch(seeds, horizon=300, stride=1, ell=1.5):
    from ftql.game import coordination_game

    g = coordination_game()
    sch = Schedule(p=0.75, q=0.25)
    ch = FeedbackChannel("bandit-iwe", QuantizationScheme.from_config("half-away", ell), NoiseModel("uniform", 0.1))
    rngs = [np.random.default_rng(s) for s in seeds]
    y0 = [np.stack([r.random(2) for r in rngs]), np.stack([r.random(2) for r in rngs])]
    return simulate(g, ENTROPIC, sch, ch, y0, rngs, horizon, log_stride=stride, seeds=seeds)


def test_simulate_matches_stepping(fig1_game):
    rec = fig1_batch([4], horizon=40)[0]
    rng = np.random.default_rng(4)
    y0 = [rng.random(2), rng.random(2)]
    sch = Schedule(p=0.75, q=0.25)
    ch = FeedbackChannel("bandit-iwe", half_away(1.5), NoiseModel("uniform", 0.1))
    s = LearnerState.from_scores(y0, ENTROPIC, sch, bandit=True)
    for n in range(1, 41):
        for i in range(2):
            np.testing.assert_array_equal(rec.x[i][n - 1], s.x[i])
        s = ftql_step(s, fig1_game, ENTROPIC, sch, ch, rng)
    for i in range(2):
        np.testing.assert_array_equal(rec.final_x[i], s.x[i])


def test_batch_equals_single_runs():
    batch = fig1_batch([0, 1, 2], horizon=600)
    for rec in batch:
        solo = fig1_batch([rec.seed], horizon=600)[0]
        for a, b in zip(rec.x, solo.x):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(rec.actions, solo.actions)


def test_determinism_and_stride():
    a = fig1_batch([9], horizon=500)[0]
    b = fig1_batch([9], horizon=500)[0]
    assert a.to_dict() == b.to_dict()
    coarse = fig1_batch([9], horizon=500, stride=10)[0]
    for n in coarse.stages:
        for i in range(2):
            np.testing.assert_array_equal(coarse.strategy_at(n)[i], a.strategy_at(n)[i])


def test_recorded_sampling_floor():
    rec = fig1_batch([5], horizon=400)[0]
    eps = Schedule(p=0.75, q=0.25).exploration(rec.stages)
    for xh in rec.x_hat:
        assert np.all(xh >= eps[:, None] / 2)


def test_example2_freeze_and_quantized_game(ex2_game):
    q = half_away(1.0)
    x1 = [[0.6, 0.4], [0.4, 0.6]]
    y0 = [initial_scores_for(ENTROPIC, xi)[None] for xi in x1]
    rec = simulate(ex2_game, ENTROPIC, Schedule(), FeedbackChannel("quantized-vector", q), y0, [None], 300)[0]
    for xi, x0 in zip(rec.x, x1):
        assert np.all(xi == np.asarray(x0))
    rec = simulate(quantize_game(ex2_game, q), ENTROPIC, Schedule(), FeedbackChannel(), y0, [None], 200)[0]
    np.testing.assert_allclose(rec.final_x[0], [1, 0], atol=1e-3)
    np.testing.assert_allclose(rec.final_x[1], [0, 1], atol=1e-3)


def test_euclidean_reaches_vertex_exactly(ex1_game):
    x1 = [[0.6, 0.4], [0.3, 0.7]]
    y0 = [initial_scores_for(EUCLIDEAN, xi)[None] for xi in x1]
    rec = simulate(ex1_game, EUCLIDEAN, Schedule(g0=0.1), FeedbackChannel(), y0, [None], 100)[0]
    np.testing.assert_array_equal(rec.final_x[0], [1.0, 0.0])
    np.testing.assert_array_equal(rec.final_x[1], [0.0, 1.0])
