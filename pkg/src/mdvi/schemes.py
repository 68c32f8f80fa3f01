"""Regularized value-iteration schemes and their run traces.

Mirror-descent form (MD), for k = 0, 1, ...::

    pi_{k+1} = G^{lam,tau}_{pi_k}(q_k)
    q_{k+1}  = (T^{lam,tau}_{pi_{k+1}|pi_k})^m q_k + eps_{k+1}

Dual-averaging form (DA) replaces the KL-anchored greedy step by an
entropy-only greedy step on an average ``h_k`` of past q-tables: the running
mean with temperature ``lam / (k+1)`` when ``tau = 0``, the moving average
with weight ``beta = lam / (lam + tau)`` when ``tau > 0``. Both forms produce
the same iterates.

The remaining variants are the named reparameterizations and limits:
CVI/DPP/advantage learning run on the ``psi = q + lam ln pi`` table, SQL,
MoVI and momentum VI on hard-greedy averages.

Trace indexing: ``q[k]`` and ``policy(k)`` hold q_k and pi_k for
k = 0..K, and ``epsilon[j]`` holds eps_j (``epsilon[0]`` is zero).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DimensionError, TraceDataError
from .mdp import (
    TabularMdp,
    optimal_value,
    regularized_bellman_apply,
    regularized_fixed_point,
    regularized_state_value,
    sample_next_states,
    vmax,
)
from .policy import Policy
from .regularization import GreedyParams, hard_greedy, regularized_greedy, smooth_max

INFINITY = math.inf


class Variant(str, Enum):
    MD = "MD"
    DA = "DA"
    AVI = "AVI"
    CVI = "CVI"
    DPP = "DPP"
    SQL = "SQL"
    MOVI = "MoVI"
    MOMENTUM_VI = "MomentumVI"
    ADVANTAGE_LEARNING = "AdvantageLearning"


@dataclass(frozen=True, eq=False)
class ErrorModel:
    """How the realized q_{k+1} departs from the exact operator output.

    ``none``: exact; ``generative``: one sampled next state per (s, a);
    ``gaussian``: i.i.d. N(0, sigma^2) noise per entry; ``prescribed``: a
    given ``(K, S, A)`` array whose row ``k`` is added at iteration k + 1.
    """

    kind: str = "none"
    sigma: float = 0.0
    errors: np.ndarray | None = None

    KINDS = ("none", "generative", "gaussian", "prescribed")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown error model {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "gaussian" and self.sigma < 0:
            raise ConfigError("gaussian sigma must be non-negative")
        if self.kind == "prescribed":
            if self.errors is None:
                raise ConfigError("prescribed error model needs an errors array")
            errors = np.array(self.errors, dtype=float)
            errors.setflags(write=False)
            object.__setattr__(self, "errors", errors)

    def __eq__(self, other):
        if not isinstance(other, ErrorModel):
            return NotImplemented
        if (self.kind, self.sigma) != (other.kind, other.sigma):
            return False
        if self.errors is None or other.errors is None:
            return self.errors is other.errors
        return np.array_equal(self.errors, other.errors)

    def __hash__(self):
        return hash((self.kind, self.sigma, None if self.errors is None else self.errors.shape))

    @classmethod
    def generative(cls) -> "ErrorModel":
        return cls("generative")

    @classmethod
    def gaussian(cls, sigma: float) -> "ErrorModel":
        return cls("gaussian", sigma=sigma)

    @classmethod
    def prescribed(cls, errors) -> "ErrorModel":
        return cls("prescribed", errors=errors)

    @property
    def stochastic(self) -> bool:
        return self.kind in ("generative", "gaussian")

    def to_dict(self) -> dict:
        doc = {"kind": self.kind}
        if self.kind == "gaussian":
            doc["sigma"] = self.sigma
        if self.kind == "prescribed":
            doc["shape"] = list(self.errors.shape)
            doc["errors"] = self.errors.ravel().tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict | str | None) -> "ErrorModel":
        if doc is None or isinstance(doc, str):
            doc = {"kind": doc or "none"}
        kind = _KIND_ALIASES.get(str(doc.get("kind", "none")).lower(), doc.get("kind"))
        errors = doc.get("errors")
        if errors is not None:
            errors = np.asarray(errors, dtype=float).reshape(doc["shape"])
        return cls(kind, sigma=float(doc.get("sigma", 0.0)), errors=errors)


_KIND_ALIASES = {
    "none": "none",
    "generativesample": "generative",
    "generative": "generative",
    "additivegaussian": "gaussian",
    "gaussian": "gaussian",
    "prescribed": "prescribed",
}


NO_ERROR = ErrorModel()

_KL_ENTROPY_FREE = {Variant.AVI, Variant.SQL, Variant.MOVI, Variant.MOMENTUM_VI, Variant.ADVANTAGE_LEARNING}
_VI_ONLY = {Variant.CVI, Variant.DPP, Variant.SQL, Variant.ADVANTAGE_LEARNING}


@dataclass(frozen=True)
class SchemeConfig:
    variant: Variant
    lam: float = 0.0
    tau: float = 0.0
    beta_override: float | None = None
    m: float = 1
    regularized_evaluation: bool = True
    clip_q: bool = False
    iterations: int = 100
    error_model: ErrorModel = field(default=NO_ERROR)
    # DPP value term: "policy" uses <pi_k, psi_k>, "logsumexp" lam * lse(psi_k / lam)
    dpp_operator: str = "policy"
    # dropping the eps tables saves memory but disables bound certification
    keep_errors: bool = True
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if isinstance(self.error_model, (dict, str)):
            object.__setattr__(self, "error_model", ErrorModel.from_dict(self.error_model))
        v = self.variant
        if self.lam < 0 or self.tau < 0:
            raise ConfigError("lam and tau must be non-negative")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigError(f"iterations must be a positive integer, got {self.iterations}")
        if self.m != INFINITY and (int(self.m) != self.m or self.m < 1):
            raise ConfigError(f"m must be a positive integer or infinity, got {self.m}")
        if v in _VI_ONLY and self.m != 1:
            raise ConfigError(f"{v.value} is a value-iteration scheme and needs m = 1")
        if v in _KL_ENTROPY_FREE and (self.lam != 0 or self.tau != 0):
            raise ConfigError(f"{v.value} takes no lam/tau (they must be 0)")
        if v == Variant.DA and self.lam + self.tau == 0:
            raise ConfigError("DA needs lam > 0 or tau > 0")
        if v == Variant.DA and self.tau == 0 and self.m == INFINITY:
            raise ConfigError("DA with tau = 0 is an averaging scheme and needs a finite m")
        if v == Variant.CVI and self.lam <= 0:
            raise ConfigError("CVI needs lam > 0")
        if v == Variant.DPP:
            if self.lam <= 0 or self.tau != 0:
                raise ConfigError("DPP needs lam > 0 and tau = 0")
            if self.dpp_operator not in ("policy", "logsumexp"):
                raise ConfigError(f"unknown dpp_operator {self.dpp_operator!r}")
        if v in (Variant.MOMENTUM_VI, Variant.ADVANTAGE_LEARNING):
            if self.beta_override is None or not 0.0 <= self.beta_override <= 1.0:
                raise ConfigError(f"{v.value} needs beta_override in [0, 1]")
        elif self.beta_override is not None:
            raise ConfigError(f"beta_override only applies to MomentumVI and AdvantageLearning")
        em = self.error_model
        if em.kind == "prescribed" and em.errors.ndim != 3:
            raise ConfigError("prescribed errors must be a (K, S, A) array")
        if em.kind == "prescribed" and em.errors.shape[0] < self.iterations:
            raise ConfigError(f"prescribed errors cover {em.errors.shape[0]} < {self.iterations} iterations")

    @property
    def beta(self) -> float:
        if self.beta_override is not None:
            return self.beta_override
        if self.lam + self.tau == 0:
            return 0.0
        return self.lam / (self.lam + self.tau)

    @property
    def scheme_id(self) -> str:
        if self.label:
            return self.label
        parts = [self.variant.value, f"lam={self.lam:g}", f"tau={self.tau:g}"]
        if self.beta_override is not None:
            parts.append(f"beta={self.beta_override:g}")
        if self.m != 1:
            parts.append(f"m={self.m:g}")
        if not self.regularized_evaluation:
            parts.append("wo")
        if self.clip_q:
            parts.append("clip")
        parts.append(self.error_model.kind)
        return "_".join(parts)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "lam": self.lam,
            "tau": self.tau,
            "beta_override": self.beta_override,
            "m": "inf" if self.m == INFINITY else int(self.m),
            "regularized_evaluation": self.regularized_evaluation,
            "clip_q": self.clip_q,
            "iterations": int(self.iterations),
            "error_model": self.error_model.to_dict(),
            "dpp_operator": self.dpp_operator,
            "keep_errors": self.keep_errors,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SchemeConfig":
        doc = dict(doc)
        if "m" in doc:
            doc["m"] = INFINITY if str(doc["m"]).lower() in ("inf", "infinity") else int(doc["m"])
        if "error_model" in doc:
            doc["error_model"] = ErrorModel.from_dict(doc["error_model"])
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown scheme fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True, eq=False)
class Targets:
    """Exact solutions a trace is measured against."""

    q_star: np.ndarray
    pi_star: Policy
    tau: float
    q_star_tau: np.ndarray
    pi_star_tau: Policy

    @classmethod
    def solve(cls, mdp: TabularMdp, tau: float, tol: float = 1e-10) -> "Targets":
        q_star, pi_star = optimal_value(mdp, 0.0, tol)
        if tau > 0:
            q_tau, pi_tau = optimal_value(mdp, tau, tol)
        else:
            q_tau, pi_tau = q_star, pi_star
        return cls(q_star, pi_star, tau, q_tau, pi_tau)


@dataclass(eq=False)
class RunTrace:
    mdp: TabularMdp
    config: SchemeConfig
    q: np.ndarray
    log_policies: np.ndarray
    epsilon: np.ndarray | None = None
    h: np.ndarray | None = None
    psi: np.ndarray | None = None

    @property
    def num_iterations(self) -> int:
        return self.q.shape[0] - 1

    def policy(self, k: int) -> Policy:
        return Policy(self.log_policies[k])

    def policies(self) -> list[Policy]:
        return [self.policy(k) for k in range(self.num_iterations + 1)]

    def require_errors(self) -> np.ndarray:
        if self.epsilon is None:
            raise TraceDataError("trace was recorded without error tables (keep_errors=False)")
        return self.epsilon

    @cached_property
    def targets(self) -> Targets:
        return Targets.solve(self.mdp, self.config.tau)


class _Recorder:
    def __init__(self, mdp: TabularMdp, config: SchemeConfig, q0: np.ndarray, with_h=False, with_psi=False):
        k, (s, a) = config.iterations, mdp.shape
        self.mdp, self.config = mdp, config
        self.q = np.empty((k + 1, s, a))
        self.log_pi = np.empty((k + 1, s, a))
        self.eps = np.zeros((k + 1, s, a)) if config.keep_errors else None
        self.h = np.empty((k + 1, s, a)) if with_h else None
        self.psi = np.empty((k + 1, s, a)) if with_psi else None
        self.q[0] = q0
        self.log_pi[0] = Policy.uniform(s, a).log_probs

    def record(self, k, q, pi, eps, h=None, psi=None):
        self.q[k] = q
        self.log_pi[k] = pi.log_probs
        if self.eps is not None:
            self.eps[k] = eps
        if h is not None:
            self.h[k] = h
        if psi is not None:
            self.psi[k] = psi

    def trace(self) -> RunTrace:
        return RunTrace(self.mdp, self.config, self.q, self.log_pi, self.eps, self.h, self.psi)


def _initial_q(mdp: TabularMdp, q0) -> np.ndarray:
    if q0 is None:
        return np.zeros(mdp.shape)
    q0 = np.array(q0, dtype=float)
    if q0.shape != mdp.shape:
        raise DimensionError(f"q0 has shape {q0.shape}, expected {mdp.shape}")
    return q0


def _check_rng(config: SchemeConfig, rng):
    if config.error_model.stochastic and rng is None:
        raise ConfigError(f"error model {config.error_model.kind!r} needs an rng")


def realize(mdp: TabularMdp, v: np.ndarray, config: SchemeConfig, rng: np.random.Generator | None,
            k: int) -> tuple[np.ndarray, np.ndarray]:
    """Realized ``r + gamma P v`` under the error model, and its error.

    ``k`` is the 0-based iteration, i.e. the output is q_{k+1}. Clipping is
    applied after the error and is accounted for in the returned error.
    """
    em = config.error_model
    exact = mdp.reward + mdp.discount * (mdp.kernel @ v)
    if em.kind == "generative":
        realized = mdp.reward + mdp.discount * v[sample_next_states(mdp, rng)]
    elif em.kind == "gaussian":
        realized = exact + em.sigma * rng.standard_normal(mdp.shape)
    elif em.kind == "prescribed":
        realized = exact + em.errors[k]
    else:
        realized = exact
    if config.clip_q:
        bound = vmax(mdp, config.tau)
        realized = np.clip(realized, -bound, bound)
    return realized, realized - exact


def evaluation_step(mdp: TabularMdp, pi_next: Policy, pi_cur: Policy, q: np.ndarray, config: SchemeConfig,
                    rng: np.random.Generator | None = None, k: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(q_{k+1}, eps_{k+1}) from ``(T^{lam,tau}_{pi_next|pi_cur})^m q``.

    Without regularized evaluation the plain T_{pi_next} is used. With m > 1
    the first m - 1 applications are exact and only the last one goes
    through the error model; m = infinity starts from the exact fixed point.
    """
    lam, tau = (config.lam, config.tau) if config.regularized_evaluation else (0.0, 0.0)
    if config.m == INFINITY:
        x = regularized_fixed_point(mdp, pi_next, pi_cur, lam, tau)
    else:
        x = q
        for _ in range(int(config.m) - 1):
            x = regularized_bellman_apply(mdp, pi_next, pi_cur, lam, tau, x)
    v = regularized_state_value(pi_next, pi_cur, lam, tau, x)
    return realize(mdp, v, config, rng, k)


def _check_variant(config: SchemeConfig, allowed):
    if config.variant not in allowed:
        names = ", ".join(v.value for v in allowed)
        raise ConfigError(f"expected variant in {{{names}}}, got {config.variant.value}")


def run_md(mdp: TabularMdp, config: SchemeConfig, rng: np.random.Generator | None = None,
           q0=None) -> RunTrace:
    """Mirror-descent MPI; AVI (lam = tau = 0) is the unregularized special case."""
    _check_variant(config, (Variant.MD, Variant.AVI))
    _check_rng(config, rng)
    q = _initial_q(mdp, q0)
    rec = _Recorder(mdp, config, q)
    params = GreedyParams(config.lam, config.tau)
    pi = Policy.uniform(*mdp.shape)
    for k in range(config.iterations):
        if params.temperature == 0:
            pi_next = hard_greedy(q)
        else:
            pi_next = regularized_greedy(q, pi, params)
        q, eps = evaluation_step(mdp, pi_next, pi, q, config, rng, k)
        pi = pi_next
        rec.record(k + 1, q, pi, eps)
    return rec.trace()


def _run_averaged(mdp, config, rng, q0, greedy, h0, average) -> RunTrace:
    q = _initial_q(mdp, q0)
    rec = _Recorder(mdp, config, q, with_h=True)
    pi = Policy.uniform(*mdp.shape)
    h = h0(q)
    rec.h[0] = h
    for k in range(config.iterations):
        pi_next = greedy(h, k)
        q, eps = evaluation_step(mdp, pi_next, pi, q, config, rng, k)
        h = average(h, q, k)
        pi = pi_next
        rec.record(k + 1, q, pi, eps, h=h)
    return rec.trace()


def run_da(mdp: TabularMdp, config: SchemeConfig, rng: np.random.Generator | None = None,
           q0=None) -> RunTrace:
    """Dual-averaging MPI.

    ``tau = 0``: pi_{k+1} = G^{0, lam/(k+1)}(h_k), h_k the mean of q_0..q_k.
    ``tau > 0``: pi_{k+1} = G^{0, tau}(h_k), h_k = beta h_{k-1} + (1 - beta) q_k
    with h_{-1} = 0.
    """
    _check_variant(config, (Variant.DA,))
    _check_rng(config, rng)
    lam, tau, beta = config.lam, config.tau, config.beta
    if tau == 0:
        return _run_averaged(
            mdp, config, rng, q0,
            greedy=lambda h, k: regularized_greedy(h, None, GreedyParams(0.0, lam / (k + 1))),
            h0=lambda q: q.copy(),
            average=lambda h, q, k: ((k + 1) * h + q) / (k + 2),
        )
    return _run_averaged(
        mdp, config, rng, q0,
        greedy=lambda h, k: regularized_greedy(h, None, GreedyParams(0.0, tau)),
        h0=lambda q: (1.0 - beta) * q,
        average=lambda h, q, k: beta * h + (1.0 - beta) * q,
    )


def _run_movi(mdp, config, rng, q0) -> RunTrace:
    return _run_averaged(
        mdp, config, rng, q0,
        greedy=lambda h, k: hard_greedy(h),
        h0=lambda q: q.copy(),
        average=lambda h, q, k: ((k + 1) * h + q) / (k + 2),
    )


def _run_momentum(mdp, config, rng, q0) -> RunTrace:
    beta = config.beta_override
    return _run_averaged(
        mdp, config, rng, q0,
        greedy=lambda h, k: hard_greedy(h),
        h0=lambda q: (1.0 - beta) * q,
        average=lambda h, q, k: beta * h + (1.0 - beta) * q,
    )


def _run_sql(mdp, config, rng, q0) -> RunTrace:
    """Speedy Q-learning on h: h_{k+1} = (1 - a) h_k + a ((k+1) T* h_k - k T* h_{k-1}), a = 1/(k+2)."""
    h = _initial_q(mdp, q0)
    rec = _Recorder(mdp, config, h, with_h=True)
    rec.h[0] = h
    v_prev = None
    for k in range(config.iterations):
        pi = hard_greedy(h)
        v_cur = h.max(axis=1)
        v = v_cur if k == 0 else (k + 1) * v_cur - k * v_prev
        q, eps = realize(mdp, v, config, rng, k)
        a = 1.0 / (k + 2)
        h = (1.0 - a) * h + a * q
        v_prev = v_cur
        rec.record(k + 1, q, pi, eps, h=h)
    return rec.trace()


def _run_psi(mdp, config, rng, q0, to_policy, value, coef, lam) -> RunTrace:
    """Schemes written on psi_k = q_{k-1} + lam ln pi_{k-1}, with pi_k read off psi_k.

    psi_0 = 0 (uniform pi_0) and psi_1 = q_0 + lam ln pi_0; then for k >= 1
    q_k = r + gamma P v(psi_k) + eps_k and psi_{k+1} = q_k + coef (psi_k - v(psi_k)).
    """
    q0 = _initial_q(mdp, q0)
    rec = _Recorder(mdp, config, q0, with_psi=True)
    rec.psi[0] = 0.0
    psi = q0 - lam * np.log(mdp.num_actions)
    for k in range(1, config.iterations + 1):
        pi = to_policy(psi)
        v = value(psi, pi)
        q, eps = realize(mdp, v, config, rng, k - 1)
        rec.record(k, q, pi, eps, psi=psi)
        psi = q + coef * (psi - v[:, None])
    return rec.trace()


def _run_cvi(mdp, config, rng, q0) -> RunTrace:
    lam, beta = config.lam, config.beta
    temp = lam / beta
    return _run_psi(
        mdp, config, rng, q0,
        to_policy=lambda psi: regularized_greedy(psi, None, GreedyParams(0.0, temp)),
        value=lambda psi, pi: smooth_max(psi, temp),
        coef=beta, lam=lam,
    )


def _run_dpp(mdp, config, rng, q0) -> RunTrace:
    lam = config.lam
    if config.dpp_operator == "logsumexp":
        value = lambda psi, pi: smooth_max(psi, lam)
    else:
        value = lambda psi, pi: (pi.probs * psi).sum(axis=1)
    return _run_psi(
        mdp, config, rng, q0,
        to_policy=lambda psi: regularized_greedy(psi, None, GreedyParams(0.0, lam)),
        value=value, coef=1.0, lam=lam,
    )


def _run_advantage_learning(mdp, config, rng, q0) -> RunTrace:
    return _run_psi(
        mdp, config, rng, q0,
        to_policy=hard_greedy,
        value=lambda psi, pi: psi.max(axis=1),
        coef=config.beta_override, lam=0.0,
    )


_VARIANT_RUNNERS = {
    Variant.CVI: _run_cvi,
    Variant.DPP: _run_dpp,
    Variant.SQL: _run_sql,
    Variant.MOVI: _run_movi,
    Variant.MOMENTUM_VI: _run_momentum,
    Variant.ADVANTAGE_LEARNING: _run_advantage_learning,
}


def run_variant(mdp: TabularMdp, config: SchemeConfig, rng: np.random.Generator | None = None,
                q0=None) -> RunTrace:
    """Named reparameterizations and limits (AVI, CVI, DPP, SQL, MoVI, MomentumVI, AdvantageLearning)."""
    if config.variant == Variant.AVI:
        return run_md(mdp, config, rng, q0)
    _check_variant(config, tuple(_VARIANT_RUNNERS))
    _check_rng(config, rng)
    return _VARIANT_RUNNERS[config.variant](mdp, config, rng, q0)


def run(mdp: TabularMdp, config: SchemeConfig, rng: np.random.Generator | None = None, q0=None) -> RunTrace:
    """Dispatch on ``config.variant``."""
    if config.variant == Variant.MD:
        return run_md(mdp, config, rng, q0)
    if config.variant == Variant.DA:
        return run_da(mdp, config, rng, q0)
    return run_variant(mdp, config, rng, q0)


def with_errors(config: SchemeConfig, errors: np.ndarray) -> SchemeConfig:
    """Copy of ``config`` driven by a fixed, pre-drawn error sequence."""
    return replace(config, error_model=ErrorModel.prescribed(errors))


# JSON-lines trace format: a header line, then one record per iteration k.

def write_trace(trace: RunTrace, path, metrics: dict[str, np.ndarray] | None = None) -> None:
    metrics = metrics or {}
    with Path(path).open("w") as fh:
        header = {"type": "header", "mdp": trace.mdp.to_dict(), "config": trace.config.to_dict()}
        fh.write(json.dumps(header) + "\n")
        for k in range(trace.num_iterations + 1):
            rec = {
                "k": k,
                "q": trace.q[k].ravel().tolist(),
                "policy": np.exp(trace.log_policies[k]).ravel().tolist(),
            }
            if trace.h is not None:
                rec["h"] = trace.h[k].ravel().tolist()
            if trace.psi is not None:
                rec["psi"] = trace.psi[k].ravel().tolist()
            if trace.epsilon is not None:
                rec["epsilon"] = trace.epsilon[k].ravel().tolist()
            rec["metrics"] = {name: float(vals[k]) for name, vals in metrics.items() if k < len(vals)}
            fh.write(json.dumps(rec) + "\n")


def read_trace(path) -> tuple[RunTrace, dict[str, np.ndarray]]:
    """Inverse of :func:`write_trace`; returns the trace and its stored metrics."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise TraceDataError(f"empty trace file {path}")
    header = json.loads(lines[0])
    if header.get("type") != "header":
        raise TraceDataError("trace file does not start with a header record")
    mdp = TabularMdp.from_dict(header["mdp"])
    config = SchemeConfig.from_dict(header["config"])
    shape = (len(lines) - 1, *mdp.shape)
    records = [json.loads(line) for line in lines[1:]]

    def stack(key):
        if key not in records[0]:
            return None
        return np.asarray([r[key] for r in records], dtype=float).reshape(shape)

    with np.errstate(divide="ignore"):
        log_pi = np.log(stack("policy"))
    trace = RunTrace(mdp, config, stack("q"), log_pi, stack("epsilon"), stack("h"), stack("psi"))
    names = records[0].get("metrics", {}).keys()
    metrics = {n: np.asarray([r["metrics"].get(n, np.nan) for r in records]) for n in names}
    return trace, metrics
