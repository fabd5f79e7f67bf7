import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsdac.actor_critic import make_rng
from qsdac.baselines import (EpisodeTrace, RunawayEpisodeError, polyak_average, project_simplex, projection_update,
                             run_baseline, simulate_episode, vanilla_update)
from qsdac.bench import loopy_chain, mm1n_queue
from qsdac.exact import qsd_power


def grid_projection(v, steps=400):
    # brute force over a simplex grid, then refine locally; only for n <= 3
    n = v.shape[0]
    best, best_d = None, np.inf
    for c in itertools.product(range(steps + 1), repeat=n - 1):
        if sum(c) > steps:
            continue
        w = np.array(list(c) + [steps - sum(c)]) / steps
        d = np.sum((w - v) ** 2)
        if d < best_d:
            best, best_d = w, d
    return best


def test_vanilla_hand_trace():
    alpha = np.array([0.5, 0.5])
    alpha, total = vanilla_update(alpha, EpisodeTrace(np.array([2, 1]), 3), 0, 0)
    np.testing.assert_allclose(alpha, [2 / 3, 1 / 3])
    assert total == 3
    alpha, total = vanilla_update(alpha, EpisodeTrace(np.array([0, 1]), 1), 1, total)
    np.testing.assert_allclose(alpha, [0.5, 0.5])
    assert total == 4


def test_vanilla_equals_pooled_occupation_measure(rng):
    # after n >= 1 episodes the iterate is total visits / total time
    alpha = np.full(4, 0.25)
    visits_sum, total = np.zeros(4), 0
    for n in range(30):
        v = rng.integers(0, 5, size=4)
        v[0] += 1
        alpha, total = vanilla_update(alpha, EpisodeTrace(v, int(v.sum())), n, total)
        visits_sum += v
        np.testing.assert_allclose(alpha, visits_sum / visits_sum.sum(), atol=1e-14)


def test_vanilla_rejects_negative_index():
    with pytest.raises(ValueError):
        vanilla_update(np.ones(2) / 2, EpisodeTrace(np.array([1, 0]), 1), -1, 0)


def test_projection_matches_grid_search(rng):
    for _ in range(5):
        v = rng.normal(size=3)
        np.testing.assert_allclose(project_simplex(v), grid_projection(v), atol=1.5 / 400)


@pytest.mark.parametrize("v, expected", [
    ([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]),
    ([2.0, 0.0], [1.0, 0.0]),
    ([0.0, 0.0, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]),
    ([1.0, 1.0], [0.5, 0.5]),
    ([5.0], [1.0]),
])
def test_projection_known_values(v, expected):
    np.testing.assert_allclose(project_simplex(v), expected, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12))
def test_projection_lands_on_simplex_and_is_idempotent(v):
    w = project_simplex(v)
    assert np.all(w >= 0.0)
    assert abs(w.sum() - 1.0) < 1e-9
    np.testing.assert_allclose(project_simplex(w), w, atol=1e-12)


def test_projection_update_step():
    alpha = np.array([0.5, 0.5])
    out = projection_update(alpha, EpisodeTrace(np.array([3, 1]), 4), 0.1)
    # alpha + 0.1 * ((3, 1) - 4 alpha) = (0.6, 0.4)
    np.testing.assert_allclose(out, [0.6, 0.4])
    with pytest.raises(ValueError):
        projection_update(alpha, EpisodeTrace(np.array([3, 1]), 4), 0.0)


def test_polyak_average_is_running_mean(rng):
    xs = rng.random((10, 3))
    nu = None
    for n, x in enumerate(xs, 1):
        nu = polyak_average(nu, x, n)
        np.testing.assert_allclose(nu, xs[:n].mean(axis=0), atol=1e-15)
    with pytest.raises(ValueError):
        polyak_average(nu, xs[0], 0)


def test_extinction_time_is_geometric_on_loopy():
    # every loopy state exits with probability eps, so tau ~ Geometric(eps) with mean 1/eps
    K = loopy_chain(0.1)
    rng = make_rng(4)
    alpha = np.full(3, 1 / 3)
    taus = np.array([simulate_episode(K, alpha, rng).extinction_time for _ in range(20_000)])
    assert taus.min() >= 1
    assert abs(taus.mean() - 10.0) < 4 * np.sqrt(90.0 / taus.size)
    assert abs(taus.var() - 90.0) < 0.1 * 90.0


def test_episode_visits_sum_to_extinction_time():
    K = mm1n_queue(10, 0.7)
    rng = make_rng(1)
    for _ in range(50):
        ep = simulate_episode(K, np.full(10, 0.1), rng)
        assert ep.visits.sum() == ep.extinction_time


def test_runaway_episode_is_reported():
    K = mm1n_queue(200, 1.25)
    start = np.zeros(200)
    start[-1] = 1.0
    with pytest.raises(RunawayEpisodeError):
        simulate_episode(K, start, make_rng(0), max_steps=10_000)
    res = run_baseline(K, "vanilla", 5, make_rng(0), alpha0=start, max_steps=10_000)
    assert res.aborted and res.iterations == 0


@pytest.mark.parametrize("method", ["vanilla", "projection", "polyak"])
def test_baselines_converge_on_loopy(method):
    K = loopy_chain(0.1)
    ref = qsd_power(K)
    res = run_baseline(K, method, 3000, make_rng(2), reference=ref, record_every=100)
    assert res.trace.l2_error[-1] < 0.05
    assert len(res.trace) == 30
    assert abs(res.alpha.sum() - 1.0) < 1e-9


def test_baselines_are_deterministic():
    K = mm1n_queue(8, 0.8)
    a = run_baseline(K, "polyak", 200, make_rng(3), reference=qsd_power(K))
    b = run_baseline(K, "polyak", 200, make_rng(3), reference=qsd_power(K))
    assert a.trace.l2_error == b.trace.l2_error
    np.testing.assert_array_equal(a.alpha, b.alpha)


def test_run_baseline_stops_at_target():
    K = loopy_chain(0.1)
    res = run_baseline(K, "vanilla", 10_000, make_rng(0), reference=qsd_power(K), target_error=0.05)
    assert res.reached_at == res.iterations < 10_000


def test_run_baseline_rejects_unknown_method():
    with pytest.raises(ValueError):
        run_baseline(loopy_chain(0.1), "sgd", 1, make_rng(0))
