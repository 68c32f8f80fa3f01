"""Error-propagation bounds for the averaged schemes, certified on run traces.

Unregularized target (tau = 0), for k >= 1::

    0 <= q* - q_{pi_k} <= |A1_k E_k / k| + g1(k)
    A1_k = (I - gamma P_{pi*})^{-1} - (I - gamma P_{pi_k})^{-1},  E_k = -sum_{j<=k} eps_j

Entropy-regularized target (tau > 0), for k >= 0::

    0 <= q*^tau - q^tau_{pi_{k+1}} <= sum_{j=1}^k gamma^{k-j} |A2_{k:j} E^b_j| + g2(k)
    A2_{k:j} = P_{pi*^tau}^{k-j} + (I - gamma P_{pi_{k+1}})^{-1} P_{k:j+1} (I - gamma P_{pi_j})
    P_{k:j} = P_{pi_k} ... P_{pi_j}  (identity when j > k)
    E^b_j = (1 - beta) sum_{i<=j} beta^{j-i} eps_i

Both inequalities are checked entry-wise, together with their sup-norm
corollaries. The sign of the error aggregates is irrelevant to the bounds
(they enter through absolute values and norms).

Carrying the lower-bound induction through with T_pi(x - e) = T_pi x - gamma P_pi e
gives the second term of A2 with a minus sign,
``P_{pi*^tau}^{k-j} - (I - gamma P_{pi_{k+1}})^{-1} P_{k:j+1} (I - gamma P_{pi_j})``.
``certify_thm2`` checks the plus form by default and the minus form with
``form="corrected"``; the two differ on some sampled runs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DegenerateMdpError
from .mdp import (
    Resolvent,
    TabularMdp,
    apply_kernel,
    bellman_apply,
    optimal_value,
    policy_value,
    regularized_bellman_apply,
    regularized_policy_value,
    vmax,
)
from .policy import Policy
from .regularization import entropy
from .schemes import RunTrace, Variant

CERTIFY_ATOL = 1e-8
LHS_ATOL = 1e-9


def g1(k: int, gamma: float, lam: float, r_max: float, num_actions: int) -> float:
    """(4 / (1 - gamma)) v^lam_max / k."""
    if k < 1:
        raise ValueError(f"g1 needs k >= 1, got {k}")
    v = (r_max + lam * math.log(num_actions)) / (1.0 - gamma)
    return 4.0 / (1.0 - gamma) * v / k


def g2(k: int, gamma: float, beta: float, v_max_tau: float) -> float:
    """gamma^k (1 + (1 - beta)/(1 - gamma)) sum_{j=0}^k (beta/gamma)^j v^tau_max."""
    if k < 0:
        raise ValueError(f"g2 needs k >= 0, got {k}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    scale = (1.0 + (1.0 - beta) / (1.0 - gamma)) * v_max_tau
    if abs(beta - gamma) > 1e-12:
        # gamma^k sum_j (beta/gamma)^j = sum_j beta^j gamma^(k-j)
        geometric = (gamma ** (k + 1) - beta ** (k + 1)) / (gamma - beta)
    else:
        geometric = (k + 1) * gamma ** k
    return scale * geometric


def error_sums(epsilon: np.ndarray) -> np.ndarray:
    """E_k = -sum_{j=1}^k eps_j for k = 0..K (E_0 = 0); ``epsilon[0]`` is ignored."""
    out = np.zeros_like(epsilon)
    out[1:] = -np.cumsum(epsilon[1:], axis=0)
    return out


def error_moving_average(epsilon: np.ndarray, beta: float) -> np.ndarray:
    """E^b_k = beta E^b_{k-1} + (1 - beta) eps_k with E^b_0 = 0."""
    out = np.zeros_like(epsilon)
    for k in range(1, len(epsilon)):
        out[k] = beta * out[k - 1] + (1.0 - beta) * epsilon[k]
    return out


def error_moving_average_direct(epsilon: np.ndarray, beta: float, k: int) -> np.ndarray:
    """(1 - beta) sum_{j=1}^k beta^(k-j) eps_j, summed term by term."""
    weights = (1.0 - beta) * beta ** (k - np.arange(1, k + 1, dtype=float))
    return np.tensordot(weights, epsilon[1:k + 1], axes=1)


@dataclass
class BoundReport:
    """Entry-wise certification of one inequality across iterations.

    ``ks`` are the indices of the bounded policy (pi_k for the first bound,
    pi_{k+1} for the second, stored as k). Tables are stacked along axis 0.
    """

    theorem: int
    ks: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    g: np.ndarray
    lhs_inf: np.ndarray
    rhs_inf: np.ndarray
    atol: float = CERTIFY_ATOL
    notes: list[str] = field(default_factory=list)

    @property
    def slack(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def slack_per_k(self) -> np.ndarray:
        return self.slack.reshape(len(self.ks), -1).min(axis=1)

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())

    @property
    def certified(self) -> bool:
        return self.min_slack >= -self.atol

    @property
    def lhs_nonnegative(self) -> bool:
        return bool(self.lhs.min() >= -LHS_ATOL)

    @property
    def corollary_certified(self) -> bool:
        return bool(np.all(self.rhs_inf - self.lhs_inf >= -self.atol))

    @property
    def marginal(self) -> bool:
        """Some slack in (-atol, 0): round-off territory, worth a warning."""
        return self.certified and self.min_slack < 0

    def to_dict(self, tables: bool = False) -> dict:
        doc = {
            "theorem": self.theorem,
            "ks": self.ks.tolist(),
            "certified": self.certified,
            "min_slack": self.min_slack,
            "atol": self.atol,
            "lhs_nonnegative": self.lhs_nonnegative,
            "corollary_certified": self.corollary_certified,
            "slack_per_k": self.slack_per_k.tolist(),
            "g": self.g.tolist(),
            "lhs_inf": self.lhs_inf.tolist(),
            "rhs_inf": self.rhs_inf.tolist(),
            "notes": list(self.notes),
        }
        if tables:
            for name in ("lhs", "rhs", "slack"):
                doc[name] = getattr(self, name).tolist()
        return doc

    def to_json(self, tables: bool = False) -> str:
        return json.dumps(self.to_dict(tables))


def _checked_ks(first: int, last: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    ks = list(range(first, last + 1, stride))
    if ks[-1] != last:
        ks.append(last)
    return np.asarray(ks)


def _check_hypotheses(trace: RunTrace, want_tau: bool) -> list[str]:
    cfg = trace.config
    if cfg.variant not in (Variant.MD, Variant.DA):
        raise ConfigError(f"bounds cover MD/DA traces, got {cfg.variant.value}")
    if want_tau and cfg.tau <= 0:
        raise ConfigError("the entropy-regularized bound needs tau > 0")
    if not want_tau and (cfg.tau != 0 or cfg.lam <= 0):
        raise ConfigError("the unregularized-target bound needs lam > 0 and tau = 0")
    trace.require_errors()
    notes = []
    if cfg.m != 1:
        notes.append(f"m = {cfg.m}: the bound is only proven for m = 1")
    if not cfg.regularized_evaluation:
        notes.append("evaluation without regularization is outside the bound's hypotheses")
    bound = vmax(trace.mdp, cfg.tau) if want_tau else vmax(trace.mdp)
    if np.abs(trace.q).max() > bound + 1e-9:
        notes.append("some |q_k| exceeds v_max (enable clip_q to meet the hypothesis)")
    return notes


def deterministic_greedy(q: np.ndarray) -> Policy:
    """One-hot policy on the first maximizing action of each row."""
    probs = np.zeros_like(q)
    probs[np.arange(q.shape[0]), q.argmax(axis=1)] = 1.0
    return Policy.from_probs(probs)


def certify_thm1(trace: RunTrace, stride: int = 1, atol: float = CERTIFY_ATOL) -> BoundReport:
    """Certify the tau = 0 bound for pi_k, k = 1..K (every ``stride``-th k plus K)."""
    notes = _check_hypotheses(trace, want_tau=False)
    mdp, cfg = trace.mdp, trace.config
    q_star = trace.targets.q_star
    resolvent_star = Resolvent(mdp, deterministic_greedy(q_star))
    sums = error_sums(trace.epsilon)
    ks = _checked_ks(1, trace.num_iterations, stride)
    lhs, rhs, g, lhs_inf, rhs_inf = [], [], [], [], []
    for k in ks:
        resolvent_k = Resolvent(mdp, trace.policy(k))
        x = sums[k] / k
        propagated = resolvent_star(x) - resolvent_k(x)
        gk = g1(int(k), mdp.discount, cfg.lam, mdp.r_max, mdp.num_actions)
        gap = q_star - resolvent_k(mdp.reward)
        lhs.append(gap)
        rhs.append(np.abs(propagated) + gk)
        g.append(gk)
        lhs_inf.append(np.abs(gap).max())
        rhs_inf.append(2.0 / (1.0 - mdp.discount) * np.abs(x).max() + gk)
    return BoundReport(1, ks, np.array(lhs), np.array(rhs), np.array(g), np.array(lhs_inf),
                       np.array(rhs_inf), atol, notes)


def _propagated_errors(mdp: TabularMdp, policies: list[Policy], pi_star: Policy, resolvent_next: Resolvent,
                       errors: np.ndarray, k: int, sign: float = 1.0) -> np.ndarray:
    """sum_{j=1}^k gamma^{k-j} |A2_{k:j} E^b_j| for one k.

    ``errors`` stacks E^b_1..E^b_k along the last axis; ``policies[j]`` is pi_j.
    """
    g = mdp.discount
    # P*^{k-j} E_j: column j-1 needs k-j applications
    star = errors.copy()
    for t in range(1, k):
        star[:, :, :k - t] = apply_kernel(mdp, pi_star, star[:, :, :k - t])
    # (I - gamma P_{pi_j}) E_j, each column under its own policy
    probs = np.stack([policies[j].probs for j in range(1, k + 1)], axis=-1)
    chain = errors - g * np.einsum("sat,tn->san", mdp.kernel, np.einsum("san,san->sn", probs, errors))
    # P_{k:j+1}: apply pi_{j+1} first, pi_k last
    for i in range(2, k + 1):
        chain[:, :, :i - 1] = apply_kernel(mdp, policies[i], chain[:, :, :i - 1])
    total = star + sign * resolvent_next(chain)
    weights = g ** (k - np.arange(1, k + 1, dtype=float))
    return (np.abs(total) * weights).sum(axis=2)


THM2_FORMS = {"stated": 1.0, "corrected": -1.0}


def certify_thm2(trace: RunTrace, stride: int = 1, atol: float = CERTIFY_ATOL,
                 form: str = "stated") -> BoundReport:
    """Certify the tau > 0 bound for pi_{k+1}, k = 0..K-1 (every ``stride``-th k plus K-1).

    ``form`` picks the sign in front of the resolvent term of A2 (see the
    module docstring).
    """
    if form not in THM2_FORMS:
        raise ValueError(f"form must be one of {sorted(THM2_FORMS)}, got {form!r}")
    notes = _check_hypotheses(trace, want_tau=True)
    if form != "stated":
        notes.append(f"A2 form: {form}")
    mdp, cfg = trace.mdp, trace.config
    tau, beta = cfg.tau, cfg.beta
    targets = trace.targets
    q_star_tau, pi_star_tau = targets.q_star_tau, targets.pi_star_tau
    moving = error_moving_average(trace.epsilon, beta)
    policies = trace.policies()
    v_tau = vmax(mdp, tau)
    ks = _checked_ks(0, trace.num_iterations - 1, stride)
    lhs, rhs, g, lhs_inf, rhs_inf = [], [], [], [], []
    for k in ks:
        k = int(k)
        pi_next = policies[k + 1]
        resolvent_next = Resolvent(mdp, pi_next)
        if k > 0:
            stack = np.moveaxis(moving[1:k + 1], 0, -1)
            propagated = _propagated_errors(mdp, policies, pi_star_tau, resolvent_next, stack, k,
                                            THM2_FORMS[form])
            weights = mdp.discount ** (k - np.arange(1, k + 1, dtype=float))
            norm_term = float((weights * np.abs(moving[1:k + 1]).reshape(k, -1).max(axis=1)).sum())
        else:
            propagated, norm_term = np.zeros(mdp.shape), 0.0
        gk = g2(k, mdp.discount, beta, v_tau)
        b = mdp.reward + mdp.discount * tau * (mdp.kernel @ entropy(pi_next))
        gap = q_star_tau - resolvent_next(b)
        lhs.append(gap)
        rhs.append(propagated + gk)
        g.append(gk)
        lhs_inf.append(np.abs(gap).max())
        rhs_inf.append(2.0 / (1.0 - mdp.discount) * norm_term + gk)
    return BoundReport(2, ks, np.array(lhs), np.array(rhs), np.array(g), np.array(lhs_inf),
                       np.array(rhs_inf), atol, notes)


def certify(trace: RunTrace, theorem: int, stride: int = 1, atol: float = CERTIFY_ATOL,
            form: str = "stated") -> BoundReport:
    if theorem == 1:
        return certify_thm1(trace, stride, atol)
    if theorem == 2:
        return certify_thm2(trace, stride, atol, form)
    raise ValueError(f"theorem must be 1 or 2, got {theorem}")


# performance metrics

def _target(trace: RunTrace, tau: float | None) -> tuple[np.ndarray, float]:
    tau = trace.config.tau if tau is None else tau
    targets = trace.targets
    if tau == targets.tau:
        return targets.q_star_tau, tau
    if tau == 0:
        return targets.q_star, tau
    return optimal_value(trace.mdp, tau)[0], tau


def normalized_error(trace: RunTrace, k: int, tau: float | None = None) -> float:
    """||q*^tau - q^tau_{pi_k}||_1 / ||q*^tau||_1 (tau defaults to the run's tau)."""
    return float(normalized_error_curve(trace, tau, ks=[k])[0])


def normalized_error_curve(trace: RunTrace, tau: float | None = None, ks=None) -> np.ndarray:
    target, tau = _target(trace, tau)
    scale = np.abs(target).sum()
    if scale == 0:
        raise DegenerateMdpError("||q*||_1 = 0: normalized error is undefined")
    ks = range(trace.num_iterations + 1) if ks is None else ks
    return np.array([np.abs(target - regularized_policy_value(trace.mdp, trace.policy(k), tau)).sum() / scale
                     for k in ks])


def linf_gap_curve(trace: RunTrace, tau: float | None = None, ks=None) -> np.ndarray:
    """||q*^tau - q^tau_{pi_k}||_inf per k."""
    target, tau = _target(trace, tau)
    ks = range(trace.num_iterations + 1) if ks is None else ks
    return np.array([np.abs(target - regularized_policy_value(trace.mdp, trace.policy(k), tau)).max()
                     for k in ks])


# identities behind the bounds, as residuals (should vanish up to round-off)

def evaluation_gap_residual(mdp: TabularMdp, pi: Policy, q: np.ndarray, tau: float = 0.0) -> float:
    """|| (q^tau_pi - q) - (I - gamma P_pi)^{-1}(T^{0,tau}_pi q - q) ||_inf."""
    applied = regularized_bellman_apply(mdp, pi, None, 0.0, tau, q) if tau > 0 else bellman_apply(mdp, pi, q)
    direct = regularized_policy_value(mdp, pi, tau) - q
    return float(np.abs(direct - Resolvent(mdp, pi)(applied - q)).max())


def _da_trace(trace: RunTrace, tau_zero: bool) -> None:
    cfg = trace.config
    if cfg.variant not in (Variant.MD, Variant.DA) or trace.config.m != 1:
        raise ConfigError("identity checks need an MD/DA trace with m = 1")
    if tau_zero != (cfg.tau == 0) or cfg.lam <= 0:
        raise ConfigError("wrong (lam, tau) regime for this identity")


def _averages(trace: RunTrace) -> np.ndarray:
    """h_0..h_K, from the trace or rebuilt from its q-tables."""
    if trace.h is not None:
        return trace.h
    cfg, q = trace.config, trace.q
    h = np.empty_like(q)
    if cfg.tau == 0:
        h[0] = q[0]
        for k in range(1, len(q)):
            h[k] = (k * h[k - 1] + q[k]) / (k + 1)
    else:
        beta = cfg.beta
        h[0] = (1.0 - beta) * q[0]
        for k in range(1, len(q)):
            h[k] = beta * h[k - 1] + (1.0 - beta) * q[k]
    return h


def average_identity_residuals(trace: RunTrace) -> np.ndarray:
    """tau = 0, k >= 1:
    T^{lam,0}_{pi_{k+1}|pi_k} q_k - [(k+1) T^{0,lam/(k+1)}_{pi_{k+1}} h_k - k T^{0,lam/k}_{pi_k} h_{k-1}].
    """
    _da_trace(trace, tau_zero=True)
    mdp, lam, h = trace.mdp, trace.config.lam, _averages(trace)
    out = []
    for k in range(1, trace.num_iterations):
        pi_next, pi_k = trace.policy(k + 1), trace.policy(k)
        left = regularized_bellman_apply(mdp, pi_next, pi_k, lam, 0.0, trace.q[k])
        right = ((k + 1) * regularized_bellman_apply(mdp, pi_next, None, 0.0, lam / (k + 1), h[k])
                 - k * regularized_bellman_apply(mdp, pi_k, None, 0.0, lam / k, h[k - 1]))
        out.append(np.abs(left - right).max())
    return np.array(out)


def moving_average_identity_residuals(trace: RunTrace) -> np.ndarray:
    """tau > 0, k >= 0:
    T^{lam,tau}_{pi_{k+1}|pi_k} q_k - (T^{0,tau}_{pi_{k+1}} h_k - beta T^{0,tau}_{pi_k} h_{k-1}) / (1 - beta),
    with h_{-1} = 0.
    """
    _da_trace(trace, tau_zero=False)
    mdp, cfg, h = trace.mdp, trace.config, _averages(trace)
    lam, tau, beta = cfg.lam, cfg.tau, cfg.beta
    out = []
    for k in range(trace.num_iterations):
        pi_next, pi_k = trace.policy(k + 1), trace.policy(k)
        h_prev = h[k - 1] if k > 0 else np.zeros(mdp.shape)
        left = regularized_bellman_apply(mdp, pi_next, pi_k, lam, tau, trace.q[k])
        right = (regularized_bellman_apply(mdp, pi_next, None, 0.0, tau, h[k])
                 - beta * regularized_bellman_apply(mdp, pi_k, None, 0.0, tau, h_prev)) / (1.0 - beta)
        out.append(np.abs(left - right).max())
    return np.array(out)


def moving_average_recursion_residuals(trace: RunTrace) -> np.ndarray:
    """tau > 0, k >= 0:
    h_{k+1} - [T^{0,tau}_{pi_{k+1}} h_k + E^b_{k+1} - beta^{k+1} (T^{0,tau}_{pi_0} h_{-1} - h_0)],
    with E^b_j = (1 - beta) sum_{i<=j} beta^{j-i} eps_i (same sign as eps).
    """
    _da_trace(trace, tau_zero=False)
    mdp, cfg, h = trace.mdp, trace.config, _averages(trace)
    tau, beta = cfg.tau, cfg.beta
    moving = error_moving_average(trace.require_errors(), beta)
    start = regularized_bellman_apply(mdp, trace.policy(0), None, 0.0, tau, np.zeros(mdp.shape)) - h[0]
    out = []
    for k in range(trace.num_iterations):
        predicted = (regularized_bellman_apply(mdp, trace.policy(k + 1), None, 0.0, tau, h[k])
                     + moving[k + 1] - beta ** (k + 1) * start)
        out.append(np.abs(h[k + 1] - predicted).max())
    return np.array(out)


def bias_gap(mdp: TabularMdp, tau: float) -> tuple[float, float]:
    """(||q* - q_{pi*^tau}||_inf, tau ln|A| / (1 - gamma))."""
    q_star, _ = optimal_value(mdp, 0.0)
    _, pi_tau = optimal_value(mdp, tau)
    gap = float(np.abs(q_star - policy_value(mdp, pi_tau)).max())
    return gap, tau * math.log(mdp.num_actions) / (1.0 - mdp.discount)
