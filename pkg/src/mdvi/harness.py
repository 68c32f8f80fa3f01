"""Garnet-suite experiments: run a grid of schemes, aggregate curves, write CSV.

Seed plan: Garnet ``i`` is drawn from ``make_rng(master_seed, i)`` and the
run of scheme ``j`` on it uses ``make_rng(master_seed, i, j)``. Every run is
therefore reproducible on its own, and results do not depend on the number
of workers or on the order runs finish in.

CSV layout (one row per scheme, iteration and metric)::

    scheme_id,k,metric,mean,std

Means and standard deviations (population, ddof = 0) are over Garnets,
summed in Garnet order. Floats are written with ``repr``, which is exact
and locale-independent.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .bounds import certify_thm1, certify_thm2, g2, linf_gap_curve, normalized_error_curve
from .exceptions import ConfigError
from .garnet import GarnetParams, generate, make_rng
from .schemes import ErrorModel, RunTrace, SchemeConfig, Variant, read_trace, run, write_trace

METRICS = ("normalized_error", "linf_gap", "bound_slack")
CSV_HEADER = ("scheme_id", "k", "metric", "mean", "std")


@dataclass(frozen=True)
class ExperimentConfig:
    garnet: GarnetParams = field(default_factory=GarnetParams)
    num_garnets: int = 100
    master_seed: int = 0
    scheme_grid: tuple[SchemeConfig, ...] = ()
    metrics: tuple[str, ...] = ("normalized_error",)
    output_path: str = "results.csv"
    store_trace: str | None = None
    bound_stride: int = 10
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scheme_grid", tuple(self.scheme_grid))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if not self.scheme_grid:
            raise ConfigError("scheme_grid must not be empty")
        if self.num_garnets < 1:
            raise ConfigError("num_garnets must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ConfigError(f"unknown metrics {sorted(unknown)}; expected a subset of {METRICS}")
        ids = [s.scheme_id for s in self.scheme_grid]
        if len(set(ids)) != len(ids):
            raise ConfigError("scheme ids must be unique (set 'label' to disambiguate)")

    def to_dict(self) -> dict:
        return {
            "garnet": asdict(self.garnet),
            "num_garnets": self.num_garnets,
            "master_seed": self.master_seed,
            "schemes": [s.to_dict() for s in self.scheme_grid],
            "metrics": list(self.metrics),
            "output_path": self.output_path,
            "store_trace": self.store_trace,
            "bound_stride": self.bound_stride,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = {"garnet", "num_garnets", "master_seed", "schemes", "metrics", "output_path",
                 "store_trace", "bound_stride", "jobs"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
        try:
            garnet = GarnetParams(**doc.pop("garnet", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad garnet parameters: {exc}") from exc
        schemes = tuple(SchemeConfig.from_dict(s) for s in doc.pop("schemes", ()))
        return cls(garnet=garnet, scheme_grid=schemes, **doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)


def trace_path(directory, garnet_idx: int, scheme_idx: int) -> Path:
    return Path(directory) / f"g{garnet_idx:03d}_s{scheme_idx:02d}.jsonl"


def bound_slack_curve(trace: RunTrace, stride: int = 10) -> np.ndarray:
    """Per-k minimum slack of the applicable bound; NaN where unchecked or not applicable."""
    out = np.full(trace.num_iterations + 1, np.nan)
    cfg = trace.config
    if cfg.variant not in (Variant.MD, Variant.DA) or trace.epsilon is None or cfg.lam + cfg.tau == 0:
        return out
    if cfg.tau > 0:
        report = certify_thm2(trace, stride)
        # the second bound is about pi_{k+1}
        out[report.ks + 1] = report.slack_per_k
    elif cfg.lam > 0:
        report = certify_thm1(trace, stride)
        out[report.ks] = report.slack_per_k
    return out


def trace_metrics(trace: RunTrace, metrics, stride: int = 10) -> dict[str, np.ndarray]:
    out = {}
    for name in metrics:
        if name == "normalized_error":
            out[name] = normalized_error_curve(trace)
        elif name == "linf_gap":
            out[name] = linf_gap_curve(trace)
        elif name == "bound_slack":
            out[name] = bound_slack_curve(trace, stride)
    return out


def _run_one(task) -> tuple[int, int, dict[str, np.ndarray]]:
    garnet_params, master_seed, g_idx, s_idx, scheme, metrics, stride, store = task
    mdp = generate(garnet_params, make_rng(master_seed, g_idx))
    trace = run(mdp, scheme, make_rng(master_seed, g_idx, s_idx))
    values = trace_metrics(trace, metrics, stride)
    if store is not None:
        write_trace(trace, trace_path(store, g_idx, s_idx), values)
    return g_idx, s_idx, values


def run_grid(config: ExperimentConfig) -> dict[str, dict[str, np.ndarray]]:
    """Per-run metric curves, stacked per scheme as ``(num_garnets, K+1)`` arrays."""
    if config.store_trace is not None:
        os.makedirs(config.store_trace, exist_ok=True)
    tasks = [
        (config.garnet, config.master_seed, g, s, scheme, config.metrics, config.bound_stride, config.store_trace)
        for g in range(config.num_garnets)
        for s, scheme in enumerate(config.scheme_grid)
    ]
    if config.jobs == 1:
        results = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * config.jobs))))
    gathered = {(g, s): values for g, s, values in results}
    return _stack(config, gathered)


def _stack(config: ExperimentConfig, gathered) -> dict[str, dict[str, np.ndarray]]:
    out = {}
    for s, scheme in enumerate(config.scheme_grid):
        out[scheme.scheme_id] = {
            name: np.stack([gathered[g, s][name] for g in range(config.num_garnets)])
            for name in config.metrics
        }
    return out


def aggregate(curves: dict[str, dict[str, np.ndarray]]) -> list[tuple]:
    """Rows (scheme_id, k, metric, mean, std); k with no finite value are skipped."""
    rows = []
    for scheme_id, per_metric in curves.items():
        for name, stack in per_metric.items():
            n = stack.shape[0]
            for k in range(stack.shape[1]):
                column = stack[:, k]
                if not np.all(np.isfinite(column)):
                    continue
                mean = 0.0
                for x in column:
                    mean += x
                mean /= n
                var = 0.0
                for x in column:
                    var += (x - mean) ** 2
                rows.append((scheme_id, k, name, mean, (var / n) ** 0.5))
    return rows


def format_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for scheme_id, k, name, mean, std in rows:
        writer.writerow((scheme_id, int(k), name, repr(float(mean)), repr(float(std))))
    return buf.getvalue()


def write_csv(rows, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(format_csv(rows))


def read_csv(path) -> dict[tuple[str, str], dict[int, tuple[float, float]]]:
    """{(scheme_id, metric): {k: (mean, std)}}."""
    out: dict = {}
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for scheme_id, k, name, mean, std in reader:
            out.setdefault((scheme_id, name), {})[int(k)] = (float(mean), float(std))
    return out


def run_experiment(config: ExperimentConfig, write: bool = True) -> list[tuple]:
    """Run the grid, aggregate over Garnets and (optionally) write the CSV."""
    rows = aggregate(run_grid(config))
    if write:
        write_csv(rows, config.output_path)
    return rows


def aggregate_from_traces(config: ExperimentConfig, directory=None) -> list[tuple]:
    """Recompute the aggregate rows from stored per-run traces."""
    directory = directory or config.store_trace
    gathered = {}
    for g in range(config.num_garnets):
        for s in range(len(config.scheme_grid)):
            trace, _ = read_trace(trace_path(directory, g, s))
            gathered[g, s] = trace_metrics(trace, config.metrics, config.bound_stride)
    return aggregate(_stack(config, gathered))


# the three panels of the error-propagation figure

@dataclass(frozen=True)
class Fig1Config:
    garnet: GarnetParams = field(default_factory=GarnetParams)
    num_garnets: int = 100
    master_seed: int = 0
    iterations: int = 800
    lams: tuple[float, ...] = (0.1, 1.0, 10.0)
    betas: tuple[float, ...] = (0.1, 0.5, 0.9, 0.99)
    tau: float = 1e-3
    error_model: str = "generative"
    out_dir: str = "fig1"
    jobs: int = 1
    store_trace: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "Fig1Config":
        doc = dict(doc)
        try:
            if "garnet" in doc:
                doc["garnet"] = GarnetParams(**doc["garnet"])
            for key in ("lams", "betas"):
                if key in doc:
                    doc[key] = tuple(float(x) for x in doc[key])
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad fig1 config: {exc}") from exc

    def _experiment(self, schemes, name) -> ExperimentConfig:
        store = None if self.store_trace is None else str(Path(self.store_trace) / name)
        return ExperimentConfig(self.garnet, self.num_garnets, self.master_seed, tuple(schemes),
                                ("normalized_error",), str(Path(self.out_dir) / f"{name}.csv"), store,
                                jobs=self.jobs)

    def panel_a(self) -> ExperimentConfig:
        em = ErrorModel.from_dict(self.error_model)
        schemes = [SchemeConfig(Variant.AVI, iterations=self.iterations, error_model=em, label="AVI")]
        schemes += [SchemeConfig(Variant.DA, lam=lam, iterations=self.iterations, error_model=em,
                                 label=f"DA_lam={lam:g}") for lam in self.lams]
        return self._experiment(schemes, "panel_a")

    def panel_c(self) -> ExperimentConfig:
        em = ErrorModel.from_dict(self.error_model)
        schemes = [SchemeConfig(Variant.DA, lam=beta * self.tau / (1.0 - beta), tau=self.tau,
                                iterations=self.iterations, error_model=em, label=f"DA_beta={beta:g}")
                   for beta in self.betas]
        return self._experiment(schemes, "panel_c")

    def panel_b_rows(self) -> list[tuple[float, int, float]]:
        """(beta, k, g2(k)) with v^tau_max for r_max = 1 and the Garnet's |A| and gamma."""
        gamma = self.garnet.discount
        v_tau = (1.0 + self.tau * np.log(self.garnet.num_actions)) / (1.0 - gamma)
        return [(beta, k, g2(k, gamma, beta, v_tau)) for beta in self.betas for k in range(self.iterations + 1)]


def sweep_fig1(config: Fig1Config) -> dict[str, Path]:
    """Write panel_a.csv, panel_b.csv and panel_c.csv under ``config.out_dir``."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, exp in (("panel_a", config.panel_a()), ("panel_c", config.panel_c())):
        run_experiment(exp)
        paths[name] = Path(exp.output_path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("beta", "k", "g2"))
    for beta, k, value in config.panel_b_rows():
        writer.writerow((repr(float(beta)), k, repr(float(value))))
    paths["panel_b"] = out / "panel_b.csv"
    paths["panel_b"].write_text(buf.getvalue())
    return paths


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
