"""Entropy/KL functionals and the closed-form regularized greedy step.

Everything is computed in log-space. The greedy policy for

    <pi, q> - lam * KL(pi || mu) + tau * H(pi)

is ``softmax((q + lam * ln mu) / (lam + tau))`` and its maximum is the
matching scaled log-sum-exp.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp

from .exceptions import DomainError
from .policy import Policy

# probabilities at or below this are exact zeros for KL support checks
ZERO_PROB = 1e-300
TIE_ATOL = 1e-12
MIN_TEMPERATURE = 1e-12


@dataclass(frozen=True)
class GreedyParams:
    lam: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        if self.lam < 0 or self.tau < 0:
            raise ValueError(f"lam and tau must be >= 0, got lam={self.lam}, tau={self.tau}")

    @property
    def temperature(self) -> float:
        return self.lam + self.tau

    @property
    def beta(self) -> float:
        if self.temperature <= 0:
            raise ValueError("beta = lam / (lam + tau) is undefined when lam + tau = 0")
        return self.lam / self.temperature


def entropy(pi: Policy) -> np.ndarray:
    """Per-state entropy -sum_a pi ln pi, with 0 ln 0 = 0."""
    p = pi.probs
    terms = np.where(p > 0, p * np.where(p > 0, pi.log_probs, 0.0), 0.0)
    return -terms.sum(axis=1)


def kl_divergence(p1: Policy, p2: Policy) -> np.ndarray:
    """Per-state KL(p1 || p2)."""
    if p1.shape != p2.shape:
        raise DomainError(f"policy shapes differ: {p1.shape} vs {p2.shape}")
    p = p1.probs
    live = p > ZERO_PROB
    if np.any(live & np.isneginf(p2.log_probs)):
        raise DomainError("KL undefined: p1 puts mass where p2 is zero")
    diff = np.where(live, p1.log_probs - np.where(live, p2.log_probs, 0.0), 0.0)
    return np.where(live, p * diff, 0.0).sum(axis=1)


def _logits(q: np.ndarray, mu: Policy | None, params: GreedyParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if params.lam == 0:
        return q / params.temperature
    if mu is None:
        raise ValueError("mu is required when lam > 0")
    if mu.shape != q.shape:
        raise DomainError(f"mu shape {mu.shape} does not match q shape {q.shape}")
    if np.any(np.isneginf(mu.log_probs)):
        raise DomainError("mu must be strictly positive when lam > 0")
    return (q + params.lam * mu.log_probs) / params.temperature


def _check_temperature(params: GreedyParams) -> bool:
    """True when the hard (unregularized) operator must be used instead."""
    if params.temperature == 0:
        raise ValueError("lam + tau = 0: use hard_greedy / the hard max instead")
    if params.temperature < MIN_TEMPERATURE:
        warnings.warn(
            f"lam + tau = {params.temperature:.3e} is below {MIN_TEMPERATURE}; "
            "falling back to the hard greedy operator",
            RuntimeWarning,
            stacklevel=3,
        )
        return True
    return False


def hard_greedy(q: np.ndarray) -> Policy:
    """Uniform distribution over the argmax set of each row (ties within 1e-12)."""
    q = np.asarray(q, dtype=float)
    best = q >= q.max(axis=1, keepdims=True) - TIE_ATOL
    probs = best / best.sum(axis=1, keepdims=True)
    return Policy.from_probs(probs)


def regularized_greedy(q: np.ndarray, mu: Policy | None, params: GreedyParams) -> Policy:
    """argmax_pi <pi, q> - lam KL(pi || mu) + tau H(pi), rows strictly positive."""
    if _check_temperature(params):
        return hard_greedy(q)
    return Policy(log_softmax(_logits(q, mu, params), axis=1))


def regularized_max(q: np.ndarray, mu: Policy | None, params: GreedyParams) -> np.ndarray:
    """Per-state maximum of the regularized greedy objective."""
    if _check_temperature(params):
        return np.asarray(q, dtype=float).max(axis=1)
    return params.temperature * logsumexp(_logits(q, mu, params), axis=1)


def greedy_objective(pi: Policy, q: np.ndarray, mu: Policy | None, params: GreedyParams) -> np.ndarray:
    """<pi, q> - lam KL(pi || mu) + tau H(pi), per state."""
    value = (pi.probs * np.asarray(q, dtype=float)).sum(axis=1)
    if params.lam > 0:
        value = value - params.lam * kl_divergence(pi, mu)
    if params.tau > 0:
        value = value + params.tau * entropy(pi)
    return value


def smooth_max(q: np.ndarray, tau: float) -> np.ndarray:
    """tau * logsumexp(q / tau) per state, or the hard max when tau = 0."""
    q = np.asarray(q, dtype=float)
    if tau == 0:
        return q.max(axis=1)
    return tau * logsumexp(q / tau, axis=1)


def mellowmax(q: np.ndarray, tau: float) -> np.ndarray:
    """tau * ln( mean_a exp(q / tau) ): the conjugate of tau KL(. || uniform)."""
    if tau <= 0:
        raise ValueError(f"mellowmax needs tau > 0, got {tau}")
    q = np.asarray(q, dtype=float)
    return tau * (logsumexp(q / tau, axis=1) - np.log(q.shape[1]))
