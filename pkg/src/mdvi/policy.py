"""Stochastic policies over a finite action set, stored in log-space."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import DimensionError, DomainError

ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Policy:
    """Row-stochastic S x A policy.

    The log-probabilities are the primary representation: softmax policies
    at very low temperature keep finite logs (say -1e8) where the
    probability itself underflows to zero, and the KL terms of the
    regularized operators need those logs. Exact zeros are ``-inf``.
    """

    log_probs: np.ndarray

    def __post_init__(self):
        lp = np.array(self.log_probs, dtype=float)
        if lp.ndim != 2:
            raise DimensionError(f"policy must be S x A, got shape {lp.shape}")
        if np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise DomainError("log-probabilities must be finite or -inf")
        lp.setflags(write=False)
        object.__setattr__(self, "log_probs", lp)
        sums = np.exp(lp).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_TOL):
            raise DomainError(f"policy rows must sum to 1 (max drift {np.abs(sums - 1).max():.3e})")

    @classmethod
    def from_probs(cls, probs) -> "Policy":
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 2:
            raise DimensionError(f"policy must be S x A, got shape {probs.shape}")
        if np.any(probs < 0):
            raise DomainError("policy probabilities must be non-negative")
        with np.errstate(divide="ignore"):
            return cls(np.log(probs))

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "Policy":
        return cls(np.full((num_states, num_actions), -np.log(num_actions)))

    @cached_property
    def probs(self) -> np.ndarray:
        p = np.exp(self.log_probs)
        p.setflags(write=False)
        return p

    @property
    def shape(self) -> tuple[int, int]:
        return self.log_probs.shape

    def __repr__(self):
        return f"Policy(shape={self.shape})"


def total_variation(p1: Policy, p2: Policy) -> float:
    """Largest per-state total-variation distance between two policies."""
    return float(0.5 * np.abs(p1.probs - p2.probs).sum(axis=1).max())
