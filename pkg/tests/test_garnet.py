import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdvi import GarnetParams, garnet_suite, generate, make_rng


@given(st.integers(2, 30), st.integers(1, 5), st.integers(1, 6), st.integers(0, 10_000))
def test_garnet_structure(num_states, num_actions, branching, seed):
    branching = min(branching, num_states)
    params = GarnetParams(num_states, num_actions, branching)
    mdp = generate(params, make_rng(seed))
    assert mdp.shape == (num_states, num_actions)
    assert np.all((mdp.kernel > 0).sum(axis=2) == branching)
    np.testing.assert_allclose(mdp.kernel.sum(axis=2), 1.0, atol=1e-12)
    rewarding = np.flatnonzero(mdp.reward[:, 0] > 0)
    assert len(rewarding) == max(1, int(0.1 * num_states))
    assert np.all(mdp.reward == mdp.reward[:, :1])
    assert np.all((mdp.reward >= 0) & (mdp.reward < 1))
    assert mdp.r_max == 1.0


def test_default_protocol_has_three_rewarding_states():
    mdp = generate(GarnetParams(), make_rng(0, 0))
    assert mdp.shape == (30, 4)
    assert mdp.discount == 0.9
    assert int((mdp.reward[:, 0] > 0).sum()) == 3


def test_generation_is_deterministic_per_key():
    a = generate(GarnetParams(), make_rng(5, 2))
    b = generate(GarnetParams(), make_rng(5, 2))
    c = generate(GarnetParams(), make_rng(5, 3))
    np.testing.assert_array_equal(a.kernel, b.kernel)
    assert not np.array_equal(a.kernel, c.kernel)
    suite = garnet_suite(GarnetParams(), 4, 5)
    np.testing.assert_array_equal(suite[2].kernel, a.kernel)


def test_branch_probabilities_are_spread_uniformly():
    # gaps of n-1 sorted uniforms are Dirichlet(1,...,1): each has mean 1/n
    mdp = generate(GarnetParams(num_states=40, num_actions=50, branching=4), make_rng(1))
    nonzero = np.sort(mdp.kernel, axis=2)[:, :, -4:]
    assert abs(nonzero.mean() - 0.25) < 1e-12
    assert abs(nonzero[:, :, -1].mean() - (1 / 4) * (1 + 1 / 2 + 1 / 3 + 1 / 4)) < 0.02


@pytest.mark.parametrize("kwargs", [dict(num_states=0), dict(branching=31), dict(reward_fraction=0.0),
                                    dict(discount=1.0)])
def test_garnet_params_validation(kwargs):
    with pytest.raises(ValueError):
        GarnetParams(**kwargs)
