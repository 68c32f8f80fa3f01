"""Garnet random MDPs (N_S states, N_A actions, branching factor N_B)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp


@dataclass(frozen=True)
class GarnetParams:
    num_states: int = 30
    num_actions: int = 4
    branching: int = 4
    reward_fraction: float = 0.1
    discount: float = 0.9

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 1 or self.branching < 1:
            raise ValueError("num_states, num_actions and branching must be positive")
        if self.branching > self.num_states:
            raise ValueError(f"branching ({self.branching}) cannot exceed num_states ({self.num_states})")
        if not 0.0 < self.reward_fraction <= 1.0:
            raise ValueError(f"reward_fraction must lie in (0, 1], got {self.reward_fraction}")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")

    @property
    def num_rewarding(self) -> int:
        return max(1, int(np.floor(self.reward_fraction * self.num_states)))


def make_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator keyed by (master_seed, *key).

    Streams for different keys are independent, so results do not depend on
    the order in which runs are scheduled.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def _open_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    x = rng.random(size)
    while np.any(x == 0.0):
        x[x == 0.0] = rng.random(int(np.sum(x == 0.0)))
    return x


def _branch_probs(rng: np.random.Generator, n: int) -> np.ndarray:
    # sorted cut points p_1 < ... < p_{n-1} in (0, 1); gaps are the probabilities
    while True:
        cuts = np.sort(_open_uniform(rng, n - 1))
        gaps = np.diff(np.concatenate(([0.0], cuts, [1.0])))
        if np.all(gaps > 0):
            return gaps


def generate(params: GarnetParams, rng: np.random.Generator) -> TabularMdp:
    """Draw one Garnet.

    For each (s, a), ``branching`` distinct next states are drawn without
    replacement and receive the gaps of a sorted uniform sample. A
    ``reward_fraction`` of the states (at least one) get a state reward drawn
    uniformly in (0, 1), shared by all actions; ``r_max`` is 1.
    """
    s, a, nb = params.num_states, params.num_actions, params.branching
    kernel = np.zeros((s, a, s))
    for i in range(s):
        for j in range(a):
            targets = rng.choice(s, size=nb, replace=False)
            kernel[i, j, targets] = _branch_probs(rng, nb)
    reward = np.zeros((s, a))
    rewarding = rng.choice(s, size=params.num_rewarding, replace=False)
    reward[rewarding, :] = _open_uniform(rng, params.num_rewarding)[:, None]
    return TabularMdp(kernel=kernel, reward=reward, discount=params.discount, r_max=1.0)


def garnet_suite(params: GarnetParams, count: int, master_seed: int) -> list[TabularMdp]:
    """``count`` Garnets, the i-th drawn from ``make_rng(master_seed, i)``."""
    return [generate(params, make_rng(master_seed, i)) for i in range(count)]
