import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_mdp
from mdvi import DimensionError, DomainError, Policy, TabularMdp
from mdvi.mdp import (
    Resolvent,
    apply_kernel,
    bellman_apply,
    optimal_value,
    policy_value,
    regularized_bellman_apply,
    regularized_fixed_point,
    regularized_policy_value,
    sample_next_states,
    sampled_backup,
    sampled_regularized_bellman,
    transition_matrix,
    vmax,
)
from mdvi.regularization import entropy, regularized_greedy, GreedyParams

seeds = st.integers(0, 10_000)
sizes = st.tuples(st.integers(1, 5), st.integers(1, 4))


def _random_policy(rng, s, a):
    p = rng.random((s, a)) + 0.05
    return Policy.from_probs(p / p.sum(axis=1, keepdims=True))


@given(seeds, sizes)
def test_resolvent_matches_dense_inverse(seed, shape):
    mdp = random_mdp(seed, *shape)
    rng = np.random.default_rng(seed)
    pi = _random_policy(rng, *shape)
    b = rng.normal(size=shape)
    n = shape[0] * shape[1]
    dense = np.linalg.inv(np.eye(n) - mdp.discount * transition_matrix(mdp, pi)) @ b.ravel()
    np.testing.assert_allclose(Resolvent(mdp, pi)(b).ravel(), dense, atol=1e-9)


def test_resolvent_on_a_stack_matches_column_by_column(small_mdp):
    rng = np.random.default_rng(1)
    pi = _random_policy(rng, *small_mdp.shape)
    stack = rng.normal(size=(*small_mdp.shape, 4))
    res = Resolvent(small_mdp, pi)
    out = res(stack)
    applied = apply_kernel(small_mdp, pi, stack)
    for j in range(4):
        np.testing.assert_allclose(out[:, :, j], res(stack[:, :, j]), atol=1e-13)
        np.testing.assert_allclose(applied[:, :, j], apply_kernel(small_mdp, pi, stack[:, :, j]), atol=1e-14)


def test_policy_value_matches_power_iteration(small_mdp):
    pi = _random_policy(np.random.default_rng(2), *small_mdp.shape)
    q = np.zeros(small_mdp.shape)
    for _ in range(800):
        q = small_mdp.reward + small_mdp.discount * small_mdp.kernel @ (pi.probs * q).sum(axis=1)
    np.testing.assert_allclose(policy_value(small_mdp, pi), q, atol=1e-10)


def test_optimal_value_matches_enumeration_of_deterministic_policies():
    mdp = random_mdp(7, 4, 3)
    n = 4 * 3
    best = np.full(n, -np.inf)
    for actions in itertools.product(range(3), repeat=4):
        probs = np.zeros((4, 3))
        probs[np.arange(4), actions] = 1.0
        pi = Policy.from_probs(probs)
        value = np.linalg.solve(np.eye(n) - mdp.discount * transition_matrix(mdp, pi), mdp.reward.ravel())
        best = np.maximum(best, value)
    q_star, pi_star = optimal_value(mdp)
    np.testing.assert_allclose(q_star.ravel(), best, atol=1e-9)
    np.testing.assert_allclose(policy_value(mdp, pi_star).ravel(), best, atol=1e-9)


def test_regularized_optimum_dominates_random_policies():
    mdp = random_mdp(8)
    tau = 0.3
    q_tau, pi_tau = optimal_value(mdp, tau)
    np.testing.assert_allclose(regularized_policy_value(mdp, pi_tau, tau), q_tau, atol=1e-9)
    rng = np.random.default_rng(0)
    for _ in range(20):
        pi = _random_policy(rng, *mdp.shape)
        assert np.all(regularized_policy_value(mdp, pi, tau) <= q_tau + 1e-9)


def test_regularized_policy_value_matches_dense_solve(small_mdp):
    pi = _random_policy(np.random.default_rng(3), *small_mdp.shape)
    tau = 0.5
    n = small_mdp.num_states * small_mdp.num_actions
    bonus = small_mdp.reward + small_mdp.discount * tau * small_mdp.kernel @ entropy(pi)
    dense = np.linalg.solve(np.eye(n) - small_mdp.discount * transition_matrix(small_mdp, pi), bonus.ravel())
    np.testing.assert_allclose(regularized_policy_value(small_mdp, pi, tau).ravel(), dense, atol=1e-10)


def test_regularized_fixed_point_matches_iterated_operator(small_mdp):
    rng = np.random.default_rng(4)
    pi, mu = _random_policy(rng, *small_mdp.shape), _random_policy(rng, *small_mdp.shape)
    q = np.zeros(small_mdp.shape)
    for _ in range(800):
        q = regularized_bellman_apply(small_mdp, pi, mu, 0.4, 0.2, q)
    np.testing.assert_allclose(regularized_fixed_point(small_mdp, pi, mu, 0.4, 0.2), q, atol=1e-10)


def test_regularized_operator_reduces_to_plain_operator(small_mdp):
    rng = np.random.default_rng(5)
    pi = _random_policy(rng, *small_mdp.shape)
    q = rng.normal(size=small_mdp.shape)
    np.testing.assert_array_equal(regularized_bellman_apply(small_mdp, pi, None, 0.0, 0.0, q),
                                  bellman_apply(small_mdp, pi, q))


def test_sampled_backup_is_unbiased(small_mdp):
    rng = np.random.default_rng(6)
    v = rng.normal(size=small_mdp.num_states)
    n = 20_000
    draws = np.stack([sampled_backup(small_mdp, v, rng)[0] for _ in range(n)])
    exact = small_mdp.reward + small_mdp.discount * small_mdp.kernel @ v
    stderr = draws.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0) - exact) <= 5 * stderr + 1e-12)


def test_sampled_regularized_bellman_returns_its_own_error(small_mdp):
    rng = np.random.default_rng(7)
    pi = _random_policy(rng, *small_mdp.shape)
    q = rng.normal(size=small_mdp.shape)
    sampled, eps = sampled_regularized_bellman(small_mdp, pi, pi, 0.3, 0.1, q, rng)
    exact = regularized_bellman_apply(small_mdp, pi, pi, 0.3, 0.1, q)
    np.testing.assert_allclose(sampled - eps, exact, atol=1e-12)


def test_sampling_never_picks_impossible_states(garnet):
    rng = np.random.default_rng(8)
    for _ in range(200):
        nxt = sample_next_states(garnet, rng)
        probs = np.take_along_axis(garnet.kernel, nxt[:, :, None], axis=2)
        assert np.all(probs > 0)


def test_sampling_frequencies_match_kernel():
    mdp = TabularMdp(np.array([[[0.0, 0.25, 0.75, 0.0]]] * 4).reshape(4, 1, 4), np.zeros((4, 1)), 0.5)
    rng = np.random.default_rng(9)
    counts = np.bincount(np.concatenate([sample_next_states(mdp, rng).ravel() for _ in range(5000)]),
                         minlength=4) / 20_000
    np.testing.assert_allclose(counts, [0.0, 0.25, 0.75, 0.0], atol=0.01)


def test_json_roundtrip(tmp_path, garnet):
    path = tmp_path / "mdp.json"
    garnet.save(path)
    back = TabularMdp.load(path)
    np.testing.assert_array_equal(back.kernel, garnet.kernel)
    np.testing.assert_array_equal(back.reward, garnet.reward)
    assert back.discount == garnet.discount and back.r_max == garnet.r_max


def test_mdp_validation():
    kernel = np.full((2, 1, 2), 0.5)
    with pytest.raises(DimensionError):
        TabularMdp(kernel, np.zeros((2, 2)), 0.9)
    with pytest.raises(DomainError):
        TabularMdp(np.full((2, 1, 2), 0.6), np.zeros((2, 1)), 0.9)
    with pytest.raises(DomainError):
        TabularMdp(kernel, np.zeros((2, 1)), 1.0)
    with pytest.raises(DomainError):
        TabularMdp(kernel, np.ones((2, 1)), 0.9, r_max=0.5)
    with pytest.raises(DimensionError):
        bellman_apply(TabularMdp(kernel, np.zeros((2, 1)), 0.9), Policy.uniform(2, 1), np.zeros((3, 1)))


def test_vmax():
    mdp = TabularMdp(np.full((2, 4, 2), 0.5), np.ones((2, 4)), 0.9)
    assert vmax(mdp) == pytest.approx(10.0)
    assert vmax(mdp, 0.1) == pytest.approx((1 + 0.1 * math.log(4)) / 0.1)


def test_optimal_value_reports_bad_tolerance(small_mdp):
    with pytest.raises(ValueError):
        optimal_value(small_mdp, tol=0.0)


def test_soft_optimal_policy_is_greedy_on_soft_q(small_mdp):
    q_tau, pi_tau = optimal_value(small_mdp, 0.2)
    expected = regularized_greedy(q_tau, None, GreedyParams(tau=0.2))
    np.testing.assert_allclose(pi_tau.probs, expected.probs, atol=1e-15)
