import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from conftest import random_kernel
from qsdac.bench import loopy_chain, mm1n_queue
from qsdac.kernel import (SubMarkovKernel, as_distribution, k_alpha, k_alpha_row, load_kernel, one_step_distribution,
                          sample_transition, sample_transitions, save_kernel, validate)


def test_exit_mass_is_complement_of_row_sums():
    K = SubMarkovKernel([[0.2, 0.3], [0.5, 0.5]])
    np.testing.assert_allclose(K.exit_mass, [0.5, 0.0])
    assert K.n_states == 2


def test_entries_are_read_only():
    K = loopy_chain(0.1)
    with pytest.raises(ValueError):
        K.entries[0, 0] = 1.0


@pytest.mark.parametrize("bad", [[[0.1, 0.2]], [], [[np.nan]]])
def test_constructor_rejects_malformed_input(bad):
    with pytest.raises(ValueError):
        SubMarkovKernel(bad)


def test_validate_accepts_benchmark_chains():
    for K in (loopy_chain(0.5), mm1n_queue(30, 1.25), mm1n_queue(30, 0.8)):
        report = validate(K)
        assert report.passed, report.failures()
        assert report.irreducible


def test_validate_flags_each_broken_invariant():
    assert validate(SubMarkovKernel([[0.5, 0.5], [0.5, 0.5]])).failures() == ["strictly_sub_markovian"]
    assert "row_sums_at_most_one" in validate(SubMarkovKernel([[0.9, 0.3], [0.1, 0.1]])).failures()
    assert "entries_in_unit_interval" in validate(SubMarkovKernel([[-0.1, 0.5], [0.1, 0.1]])).failures()
    assert "nonzero_measure" in validate(SubMarkovKernel([[0.0, 0.0], [0.1, 0.1]])).failures()


def test_validate_reports_reducible_chain_without_failing():
    report = validate(SubMarkovKernel([[0.5, 0.0], [0.2, 0.3]]))
    assert report.passed
    assert not report.irreducible
    assert report.lines()[-1] == "irreducible: no"


def test_as_distribution_checks():
    np.testing.assert_array_equal(as_distribution([0.25, 0.75]), [0.25, 0.75])
    for bad in ([0.5, 0.6], [-0.1, 1.1], [[0.5, 0.5]]):
        with pytest.raises(ValueError):
            as_distribution(bad)
    with pytest.raises(ValueError):
        as_distribution([0.5, 0.5], n_states=3)


def test_k_alpha_matches_definition_on_loopy():
    K = loopy_chain(0.1)
    alpha = np.array([0.5, 0.3, 0.2])
    # hand value: K(x, y) = 0.3 for all pairs, exit 0.1
    np.testing.assert_allclose(k_alpha_row(K, alpha, 1), 0.3 + 0.1 * alpha)
    np.testing.assert_allclose(k_alpha(K, alpha).sum(axis=1), 1.0)


def test_k_alpha_row_on_queue_exit_state():
    K = mm1n_queue(5, 1.25)
    alpha = np.full(5, 0.2)
    lam, mu = 1.25 / 2.25, 1.0 / 2.25
    np.testing.assert_allclose(k_alpha_row(K, alpha, 0), [mu * 0.2, lam + mu * 0.2, mu * 0.2, mu * 0.2, mu * 0.2])
    np.testing.assert_array_equal(k_alpha_row(K, alpha, 3), K.entries[3])


def test_k_alpha_row_rejects_bad_state():
    with pytest.raises(IndexError):
        k_alpha_row(loopy_chain(0.1), np.full(3, 1 / 3), 3)


def test_one_step_distribution_is_alpha_times_k_alpha(rng):
    K = random_kernel(rng, 6)
    alpha = rng.dirichlet(np.ones(6))
    np.testing.assert_allclose(one_step_distribution(K, alpha), alpha @ k_alpha(K, alpha), atol=1e-15)


def test_sampling_frequencies_match_k_alpha_row():
    K = mm1n_queue(6, 1.25)
    alpha = np.array([0.05, 0.1, 0.15, 0.2, 0.25, 0.25])
    rng = np.random.default_rng(7)
    n = 1_000_000
    ys = sample_transitions(K, alpha, np.zeros(n, dtype=np.intp), rng)
    counts = np.bincount(ys, minlength=6)
    expected = n * k_alpha_row(K, alpha, 0)
    _, p = stats.chisquare(counts, expected)
    assert p > 1e-3


def test_sample_transition_is_reproducible():
    K = loopy_chain(0.3)
    alpha = np.full(3, 1 / 3)
    a = [sample_transition(K, alpha, 0, np.random.default_rng(5)) for _ in range(3)]
    assert len(set(a)) == 1


def test_sampling_never_returns_zero_probability_states():
    K = mm1n_queue(8, 2.0)
    alpha = np.array([0, 0, 0, 0.5, 0.5, 0, 0, 0.0])
    ys = sample_transitions(K, alpha, np.zeros(50_000, dtype=np.intp), np.random.default_rng(1))
    assert set(np.unique(ys)) <= {1, 3, 4}


def test_kernel_file_round_trip(tmp_path):
    K = mm1n_queue(7, 1.1)
    path = tmp_path / "k.txt"
    save_kernel(K, path)
    np.testing.assert_array_equal(load_kernel(path).entries, K.entries)


def test_kernel_file_allows_comments(tmp_path):
    path = tmp_path / "k.txt"
    path.write_text("# two states\n2\n0.5 0.25  # row 0\n0.0 0.9\n")
    np.testing.assert_allclose(load_kernel(path).exit_mass, [0.25, 0.1])


@pytest.mark.parametrize("text", ["", "2\n0.5 0.5\n", "2\n0.5\n0.5 0.5\n", "x\n"])
def test_kernel_file_rejects_malformed(tmp_path, text):
    path = tmp_path / "k.txt"
    path.write_text(text)
    with pytest.raises(ValueError):
        load_kernel(path)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 2**32 - 1))
def test_k_alpha_is_stochastic_and_beta_a_distribution(n, seed):
    rng = np.random.default_rng(seed)
    K = random_kernel(rng, n)
    alpha = rng.dirichlet(np.ones(n))
    Ka = k_alpha(K, alpha)
    assert np.all(Ka >= 0.0)
    np.testing.assert_allclose(Ka.sum(axis=1), 1.0, atol=1e-12)
    beta = one_step_distribution(K, alpha)
    assert abs(beta.sum() - 1.0) < 1e-12
    assert np.all(beta >= 0.0)
