"""Command-line entry point.

Subcommands: ``garnet generate``, ``run``, ``sweep``, ``bound-check``, ``fig1``.
Exit codes: 0 success, 2 configuration error, 3 certification failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bounds import certify
from .exceptions import ConfigError, MdviError
from .garnet import GarnetParams, generate, make_rng
from .harness import (
    ExperimentConfig,
    Fig1Config,
    aggregate,
    run_experiment,
    sweep_fig1,
    trace_metrics,
    write_csv,
)
from .mdp import TabularMdp
from .schemes import INFINITY, SchemeConfig, read_trace, run, write_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNCERTIFIED = 3


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _garnet_params(args, doc: dict) -> GarnetParams:
    fields = dict(doc.get("garnet", {}))
    for name in ("num_states", "num_actions", "branching", "discount"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    try:
        return GarnetParams(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad garnet parameters: {exc}") from exc


def _add_garnet_flags(p):
    p.add_argument("--num-states", type=int, dest="num_states")
    p.add_argument("--num-actions", type=int, dest="num_actions")
    p.add_argument("--branching", type=int)
    p.add_argument("--discount", type=float)


def cmd_garnet_generate(args) -> int:
    doc = _load_json(args.config)
    params = _garnet_params(args, doc)
    seed = args.seed if args.seed is not None else doc.get("master_seed", 0)
    mdp = generate(params, make_rng(seed, args.index))
    text = json.dumps(mdp.to_dict())
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


def _scheme_from_args(args, doc: dict) -> SchemeConfig:
    fields = dict(doc.get("scheme", doc if "variant" in doc else {}))
    overrides = {
        "variant": args.variant,
        "lam": args.lam,
        "tau": args.tau,
        "beta_override": args.beta,
        "iterations": args.iterations,
        "error_model": args.error_model,
    }
    fields.update({k: v for k, v in overrides.items() if v is not None})
    if args.m is not None:
        fields["m"] = args.m
    if args.clip:
        fields["clip_q"] = True
    if args.unregularized_evaluation:
        fields["regularized_evaluation"] = False
    if "variant" not in fields:
        raise ConfigError("no variant given (use --variant or a config with 'variant')")
    if isinstance(fields.get("error_model"), str) and fields["error_model"] == "gaussian":
        fields["error_model"] = {"kind": "gaussian", "sigma": args.sigma}
    try:
        return SchemeConfig.from_dict(fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args) -> int:
    doc = _load_json(args.config)
    scheme = _scheme_from_args(args, doc)
    seed = args.seed if args.seed is not None else doc.get("master_seed", 0)
    mdp_path = args.mdp or doc.get("mdp")
    if mdp_path:
        try:
            mdp = TabularMdp.load(mdp_path)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot load MDP {mdp_path}: {exc}") from exc
    else:
        mdp = generate(_garnet_params(args, doc), make_rng(seed, 0))
    trace = run(mdp, scheme, make_rng(seed, 0, 0))
    metrics = list(doc.get("metrics", ["normalized_error", "linf_gap"]))
    values = trace_metrics(trace, metrics, doc.get("bound_stride", 10))
    rows = aggregate({scheme.scheme_id: {name: v[None, :] for name, v in values.items()}})
    if args.store_trace:
        write_trace(trace, args.store_trace, values)
    out = args.out or "run.csv"
    write_csv(rows, out)
    last = {name: float(v[-1]) for name, v in values.items()}
    print(json.dumps({"scheme_id": scheme.scheme_id, "iterations": scheme.iterations, "final": last}))
    return EXIT_OK


def _experiment_from_args(args) -> ExperimentConfig:
    config = ExperimentConfig.from_dict(_load_json(args.config))
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_path"] = args.out
    if args.store_trace is not None:
        overrides["store_trace"] = args.store_trace
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.num_garnets is not None:
        overrides["num_garnets"] = args.num_garnets
    return replace(config, **overrides)


def cmd_sweep(args) -> int:
    if args.config is None:
        raise ConfigError("sweep needs --config <json>")
    config = _experiment_from_args(args)
    rows = run_experiment(config)
    print(json.dumps({"output": config.output_path, "rows": len(rows)}))
    return EXIT_OK


def cmd_bound_check(args) -> int:
    try:
        trace, _ = read_trace(args.trace)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read trace {args.trace}: {exc}") from exc
    report = certify(trace, args.theorem, args.stride, form=args.form)
    if args.out:
        Path(args.out).write_text(report.to_json(tables=args.tables))
    print(f"min_slack {report.min_slack:.6e}")
    print(f"certified {str(report.certified).lower()}")
    return EXIT_OK if report.certified else EXIT_UNCERTIFIED


def cmd_fig1(args) -> int:
    doc = _load_json(args.config)
    config = Fig1Config.from_dict(doc)
    overrides = {
        "master_seed": args.seed,
        "out_dir": args.out,
        "jobs": args.jobs,
        "store_trace": args.store_trace,
        "num_garnets": args.num_garnets,
        "iterations": args.iterations,
    }
    config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    paths = sweep_fig1(config)
    print(json.dumps({name: str(p) for name, p in paths.items()}))
    return EXIT_OK


def _parse_m(text: str):
    if text.lower() in ("inf", "infinity"):
        return INFINITY
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdvi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    garnet = sub.add_parser("garnet", help="Garnet MDP utilities")
    garnet_sub = garnet.add_subparsers(dest="garnet_command", required=True)
    gen = garnet_sub.add_parser("generate", help="draw one Garnet and write it as JSON")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--index", type=int, default=0, help="Garnet index within the seed's suite")
    gen.add_argument("--out")
    gen.add_argument("--config")
    _add_garnet_flags(gen)
    gen.set_defaults(func=cmd_garnet_generate)

    r = sub.add_parser("run", help="run one scheme on one MDP")
    r.add_argument("--config")
    r.add_argument("--mdp", help="MDP JSON file (default: Garnet 0 of --seed)")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--store-trace", dest="store_trace")
    r.add_argument("--variant")
    r.add_argument("--lam", type=float)
    r.add_argument("--tau", type=float)
    r.add_argument("--beta", type=float)
    r.add_argument("--m", type=_parse_m)
    r.add_argument("--iterations", type=int)
    r.add_argument("--error-model", dest="error_model", choices=["none", "generative", "gaussian"])
    r.add_argument("--sigma", type=float, default=1.0)
    r.add_argument("--clip", action="store_true")
    r.add_argument("--unregularized-evaluation", dest="unregularized_evaluation", action="store_true")
    _add_garnet_flags(r)
    r.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run a scheme grid over a Garnet suite")
    sw.add_argument("--config")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out")
    sw.add_argument("--store-trace", dest="store_trace")
    sw.add_argument("--jobs", type=int)
    sw.add_argument("--num-garnets", type=int, dest="num_garnets")
    sw.set_defaults(func=cmd_sweep)

    bc = sub.add_parser("bound-check", help="certify an error-propagation bound on a stored trace")
    bc.add_argument("--trace", required=True)
    bc.add_argument("--theorem", type=int, choices=[1, 2], required=True)
    bc.add_argument("--stride", type=int, default=1)
    bc.add_argument("--form", choices=["stated", "corrected"], default="stated")
    bc.add_argument("--out", help="write the BoundReport JSON here")
    bc.add_argument("--tables", action="store_true", help="include lhs/rhs/slack tables in the report")
    bc.set_defaults(func=cmd_bound_check)

    f = sub.add_parser("fig1", help="data for the three error-propagation panels")
    f.add_argument("--config")
    f.add_argument("--seed", type=int)
    f.add_argument("--out")
    f.add_argument("--jobs", type=int)
    f.add_argument("--store-trace", dest="store_trace")
    f.add_argument("--num-garnets", type=int, dest="num_garnets")
    f.add_argument("--iterations", type=int)
    f.set_defaults(func=cmd_fig1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, matching the configuration-error code
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, MdviError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
