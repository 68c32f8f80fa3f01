"""Finite MDPs, Bellman operators and exact solvers.

Tables indexed by (state, action) are plain ``(S, A)`` float arrays. For a
policy ``pi`` and a table ``q``:

    T_pi q              = r + gamma * P <pi, q>
    T^{lam,tau}_{pi|mu} = r + gamma * P (<pi, q> - lam KL(pi||mu) + tau H(pi))

Linear systems ``(I - gamma P_pi) x = b`` on S*A unknowns are reduced to an
S x S system on ``y = <pi, x>`` and solved by LU factorization.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .exceptions import DimensionError, DomainError
from .policy import Policy
from .regularization import GreedyParams, entropy, hard_greedy, kl_divergence, regularized_greedy, smooth_max

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """An MDP (S, A, P, r, gamma) with an explicit reward bound ``r_max``."""

    kernel: np.ndarray
    reward: np.ndarray
    discount: float
    r_max: float | None = field(default=None)

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=float)
        reward = np.array(self.reward, dtype=float)
        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
            raise DimensionError(f"kernel must be S x A x S, got {kernel.shape}")
        if reward.shape != kernel.shape[:2]:
            raise DimensionError(f"reward shape {reward.shape} does not match kernel {kernel.shape}")
        if np.any(kernel < 0):
            raise DomainError("kernel entries must be non-negative")
        if np.any(np.abs(kernel.sum(axis=2) - 1.0) > STOCHASTIC_TOL):
            raise DomainError("kernel rows must sum to 1")
        if not 0.0 < self.discount < 1.0:
            raise DomainError(f"discount must lie in (0, 1), got {self.discount}")
        r_max = float(np.abs(reward).max()) if self.r_max is None else float(self.r_max)
        if np.any(np.abs(reward) > r_max):
            raise DomainError(f"|reward| exceeds r_max = {r_max}")
        kernel.setflags(write=False)
        reward.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "r_max", r_max)

    @property
    def num_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def num_actions(self) -> int:
        return self.kernel.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.reward.shape

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "discount": self.discount,
            "r_max": self.r_max,
            "reward": self.reward.ravel().tolist(),
            "kernel": self.kernel.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMdp":
        s, a = int(doc["num_states"]), int(doc["num_actions"])
        return cls(
            kernel=np.asarray(doc["kernel"], dtype=float).reshape(s, a, s),
            reward=np.asarray(doc["reward"], dtype=float).reshape(s, a),
            discount=float(doc["discount"]),
            r_max=float(doc["r_max"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TabularMdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def vmax(mdp: TabularMdp, tau: float = 0.0) -> float:
    """(r_max + tau ln|A|) / (1 - gamma)."""
    return (mdp.r_max + tau * np.log(mdp.num_actions)) / (1.0 - mdp.discount)


def _check_table(mdp: TabularMdp, q, name="q") -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[:2] != mdp.shape:
        raise DimensionError(f"{name} has shape {q.shape}, expected {mdp.shape}")
    return q


def _check_policy(mdp: TabularMdp, pi: Policy, name="pi") -> Policy:
    if pi.shape != mdp.shape:
        raise DimensionError(f"{name} has shape {pi.shape}, expected {mdp.shape}")
    return pi


def expected_next(mdp: TabularMdp, v: np.ndarray) -> np.ndarray:
    """P v: expectation of a state vector under the next-state distribution."""
    return mdp.kernel @ v


def state_kernel(mdp: TabularMdp, pi: Policy) -> np.ndarray:
    """S x S kernel sum_a pi(a|s) P(s'|s,a)."""
    return np.einsum("sa,sat->st", pi.probs, mdp.kernel)


def apply_kernel(mdp: TabularMdp, pi: Policy, x: np.ndarray) -> np.ndarray:
    """P_pi x = P <pi, x> for an (S, A) table or an (S, A, n) stack."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return mdp.kernel @ (pi.probs * x).sum(axis=1)
    return np.einsum("sat,tn->san", mdp.kernel, np.einsum("sa,san->sn", pi.probs, x))


def transition_matrix(mdp: TabularMdp, pi: Policy) -> np.ndarray:
    """Dense SA x SA matrix of P_pi (rows and columns in row-major (s, a) order)."""
    s, a = mdp.shape
    return (mdp.kernel[:, :, :, None] * pi.probs[None, None, :, :]).reshape(s * a, s * a)


class Resolvent:
    """Applies (I - gamma P_pi)^{-1} through one cached LU factorization."""

    def __init__(self, mdp: TabularMdp, pi: Policy):
        self.mdp = mdp
        self.pi = _check_policy(mdp, pi)
        s = mdp.num_states
        self._lu = lu_factor(np.eye(s) - mdp.discount * state_kernel(mdp, pi))

    def __call__(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        g = self.mdp.discount
        if b.ndim == 2:
            y = lu_solve(self._lu, (self.pi.probs * b).sum(axis=1))
            return b + g * (self.mdp.kernel @ y)
        y = lu_solve(self._lu, np.einsum("sa,san->sn", self.pi.probs, b))
        return b + g * np.einsum("sat,tn->san", self.mdp.kernel, y)


def solve_resolvent(mdp: TabularMdp, pi: Policy, b: np.ndarray) -> np.ndarray:
    """x = (I - gamma P_pi)^{-1} b."""
    return Resolvent(mdp, pi)(_check_table(mdp, b, "b"))


def regularized_state_value(pi: Policy, mu: Policy | None, lam: float, tau: float, q: np.ndarray) -> np.ndarray:
    """<pi, q> - lam KL(pi || mu) + tau H(pi), per state."""
    value = (pi.probs * q).sum(axis=1)
    if lam > 0:
        value = value - lam * kl_divergence(pi, mu)
    if tau > 0:
        value = value + tau * entropy(pi)
    return value


def bellman_apply(mdp: TabularMdp, pi: Policy, q: np.ndarray) -> np.ndarray:
    """T_pi q = r + gamma P <pi, q>."""
    q = _check_table(mdp, q)
    _check_policy(mdp, pi)
    return mdp.reward + mdp.discount * (mdp.kernel @ (pi.probs * q).sum(axis=1))


def regularized_bellman_apply(mdp: TabularMdp, pi: Policy, mu: Policy | None, lam: float, tau: float,
                              q: np.ndarray) -> np.ndarray:
    """T^{lam,tau}_{pi|mu} q."""
    q = _check_table(mdp, q)
    _check_policy(mdp, pi)
    if lam > 0:
        _check_policy(mdp, mu, "mu")
    v = regularized_state_value(pi, mu, lam, tau, q)
    return mdp.reward + mdp.discount * (mdp.kernel @ v)


def policy_value(mdp: TabularMdp, pi: Policy) -> np.ndarray:
    """q_pi, the fixed point of T_pi."""
    return Resolvent(mdp, pi)(mdp.reward)


def regularized_policy_value(mdp: TabularMdp, pi: Policy, tau: float) -> np.ndarray:
    """q^tau_pi, the fixed point of T^{0,tau}_pi: (I - gamma P_pi) q = r + gamma tau P H(pi)."""
    _check_policy(mdp, pi)
    b = mdp.reward
    if tau > 0:
        b = b + mdp.discount * tau * (mdp.kernel @ entropy(pi))
    return Resolvent(mdp, pi)(b)


def regularized_fixed_point(mdp: TabularMdp, pi: Policy, mu: Policy | None, lam: float, tau: float) -> np.ndarray:
    """Fixed point of T^{lam,tau}_{pi|mu} (the m = infinity evaluation)."""
    _check_policy(mdp, pi)
    penalty = regularized_state_value(pi, mu, lam, tau, np.zeros(mdp.shape))
    return Resolvent(mdp, pi)(mdp.reward + mdp.discount * (mdp.kernel @ penalty))


def optimality_apply(mdp: TabularMdp, q: np.ndarray, tau: float = 0.0) -> np.ndarray:
    """r + gamma P Omega_tau(q); Omega is the hard max (tau = 0) or tau-logsumexp."""
    return mdp.reward + mdp.discount * (mdp.kernel @ smooth_max(q, tau))


def optimal_value(mdp: TabularMdp, tau: float = 0.0, tol: float = 1e-10,
                  max_iter: int = 1_000_000) -> tuple[np.ndarray, Policy]:
    """(q*^tau, pi*^tau) by iterating the (soft) optimality operator.

    Stops once the sup-norm change is at most ``tol (1 - gamma) / (2 gamma)``,
    which bounds the distance to the fixed point by ``tol / 2``.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    g = mdp.discount
    threshold = tol * (1.0 - g) / (2.0 * g)
    q = np.zeros(mdp.shape)
    for _ in range(max_iter):
        q_next = optimality_apply(mdp, q, tau)
        delta = np.abs(q_next - q).max()
        q = q_next
        if delta <= threshold:
            break
    else:
        raise RuntimeError(f"optimality operator did not converge in {max_iter} iterations")
    residual = np.abs(optimality_apply(mdp, q, tau) - q).max()
    if residual > tol:
        raise RuntimeError(f"Bellman residual {residual:.3e} exceeds tol {tol:.3e}")
    pi = hard_greedy(q) if tau == 0 else regularized_greedy(q, None, GreedyParams(0.0, tau))
    return q, pi


def sample_next_states(mdp: TabularMdp, rng: np.random.Generator) -> np.ndarray:
    """One next state per (s, a), drawn from P(. | s, a) by inverse CDF."""
    cdf = np.cumsum(mdp.kernel, axis=2)
    cdf /= cdf[:, :, -1:]
    u = rng.random(mdp.shape)
    # first index with cdf > u; zero-probability states are never selected
    return (cdf <= u[:, :, None]).sum(axis=2)


def sampled_backup(mdp: TabularMdp, v: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sampled and exact ``r + gamma P v`` from one next-state draw per (s, a)."""
    exact = mdp.reward + mdp.discount * (mdp.kernel @ v)
    sampled = mdp.reward + mdp.discount * v[sample_next_states(mdp, rng)]
    return sampled, exact


def sampled_regularized_bellman(mdp: TabularMdp, pi: Policy, mu: Policy | None, lam: float, tau: float,
                                q: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Generative-model estimate of T^{lam,tau}_{pi|mu} q.

    Returns ``(sampled, eps)`` with ``eps = sampled - exact``.
    """
    q = _check_table(mdp, q)
    _check_policy(mdp, pi)
    v = regularized_state_value(pi, mu, lam, tau, q)
    sampled, exact = sampled_backup(mdp, v, rng)
    return sampled, sampled - exact
