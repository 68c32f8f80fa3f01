import json

import numpy as np
import pytest

from mdvi import ConfigError, ErrorModel, GarnetParams, SchemeConfig, generate, make_rng, run
from mdvi.bounds import g2, normalized_error_curve
from mdvi.cli import EXIT_CONFIG, EXIT_OK, EXIT_UNCERTIFIED, main
from mdvi.harness import (
    CSV_HEADER,
    ExperimentConfig,
    Fig1Config,
    aggregate,
    aggregate_from_traces,
    format_csv,
    read_csv,
    run_experiment,
    run_grid,
    sweep_fig1,
    trace_path,
)
from mdvi.schemes import read_trace, write_trace

SMALL = GarnetParams(num_states=20, num_actions=3, branching=3)


def _grid(iterations=30):
    em = ErrorModel.generative()
    return (
        SchemeConfig("AVI", iterations=iterations, error_model=em),
        SchemeConfig("DA", lam=0.5, iterations=iterations, error_model=em),
        SchemeConfig("DA", lam=0.09, tau=0.01, iterations=iterations, error_model=em),
    )


def _experiment(tmp_path, **kw):
    base = dict(garnet=SMALL, num_garnets=4, master_seed=3, scheme_grid=_grid(),
                metrics=("normalized_error", "linf_gap", "bound_slack"), output_path=str(tmp_path / "out.csv"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_error_free_avi_reaches_the_optimum():
    mdp = generate(GarnetParams(), make_rng(0, 0))
    trace = run(mdp, SchemeConfig("AVI", iterations=300))
    assert normalized_error_curve(trace)[-1] <= 1e-6


def test_aggregate_matches_numpy_statistics(tmp_path):
    config = _experiment(tmp_path)
    curves = run_grid(config)
    rows = aggregate(curves)
    for scheme_id, k, metric, mean, std in rows[::17]:
        column = curves[scheme_id][metric][:, k]
        assert mean == pytest.approx(column.mean(), rel=1e-12, abs=1e-15)
        assert std == pytest.approx(column.std(), rel=1e-9, abs=1e-15)


def test_runs_are_reproducible_from_their_seed_keys(tmp_path):
    config = _experiment(tmp_path, metrics=("normalized_error",))
    curves = run_grid(config)
    scheme = config.scheme_grid[1]
    mdp = generate(SMALL, make_rng(3, 2))
    alone = normalized_error_curve(run(mdp, scheme, make_rng(3, 2, 1)))
    np.testing.assert_array_equal(curves[scheme.scheme_id]["normalized_error"][2], alone)


def test_csv_is_identical_across_worker_counts(tmp_path):
    texts = []
    for jobs in (1, 2, 3):
        config = _experiment(tmp_path, jobs=jobs, output_path=str(tmp_path / f"j{jobs}.csv"))
        run_experiment(config)
        texts.append((tmp_path / f"j{jobs}.csv").read_bytes())
    assert texts[0] == texts[1] == texts[2]


def test_csv_layout_and_round_trip(tmp_path):
    config = _experiment(tmp_path)
    rows = run_experiment(config)
    lines = (tmp_path / "out.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    parsed = read_csv(tmp_path / "out.csv")
    for scheme_id, k, metric, mean, std in rows:
        assert parsed[scheme_id, metric][k] == (mean, std)
    # bound slack exists only for the regularized schemes and only on the stride
    slack_ids = {s for s, m in parsed if m == "bound_slack"}
    assert slack_ids == {s.scheme_id for s in config.scheme_grid[1:]}
    assert all(v[0] >= -1e-8 for s, m in parsed if m == "bound_slack" for v in parsed[s, m].values())


def test_stored_traces_reproduce_the_aggregate(tmp_path):
    store = tmp_path / "traces"
    config = _experiment(tmp_path, store_trace=str(store))
    rows = run_experiment(config)
    assert trace_path(store, 3, 2).exists()
    again = aggregate_from_traces(config)
    assert [r[:3] for r in rows] == [r[:3] for r in again]
    np.testing.assert_allclose([r[3:] for r in rows], [r[3:] for r in again], rtol=0, atol=1e-12)


def test_trace_file_round_trip(tmp_path, garnet):
    cfg = SchemeConfig("DA", lam=0.09, tau=0.01, iterations=5, error_model=ErrorModel.generative())
    trace = run(garnet, cfg, make_rng(1))
    write_trace(trace, tmp_path / "t.jsonl", {"x": np.arange(6.0)})
    back, metrics = read_trace(tmp_path / "t.jsonl")
    assert back.config == cfg
    np.testing.assert_array_equal(back.q, trace.q)
    np.testing.assert_array_equal(back.h, trace.h)
    np.testing.assert_array_equal(back.epsilon, trace.epsilon)
    np.testing.assert_allclose(back.policy(5).probs, trace.policy(5).probs, atol=1e-15)
    np.testing.assert_array_equal(metrics["x"], np.arange(6.0))


def test_experiment_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        _experiment(tmp_path, scheme_grid=())
    with pytest.raises(ConfigError):
        _experiment(tmp_path, metrics=("accuracy",))
    with pytest.raises(ConfigError):
        _experiment(tmp_path, scheme_grid=_grid()[:1] * 2)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"schemes": [{"variant": "AVI"}], "colour": 1})
    config = _experiment(tmp_path)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(config.to_dict()))) == config


def test_figure_panels(tmp_path):
    config = Fig1Config(garnet=SMALL, num_garnets=2, iterations=10, out_dir=str(tmp_path / "fig"))
    paths = sweep_fig1(config)
    a = read_csv(paths["panel_a"])
    assert {s for s, _ in a} == {"AVI", "DA_lam=0.1", "DA_lam=1", "DA_lam=10"}
    c = read_csv(paths["panel_c"])
    assert {s for s, _ in c} == {f"DA_beta={b:g}" for b in config.betas}
    lines = paths["panel_b"].read_text().splitlines()
    assert lines[0] == "beta,k,g2" and len(lines) == 1 + 4 * 11
    v_tau = (1 + 1e-3 * np.log(3)) / (1 - 0.9)
    for line in lines[1:]:
        beta, k, value = line.split(",")
        assert float(value) == pytest.approx(g2(int(k), 0.9, float(beta), v_tau), rel=1e-14)


def test_panel_c_maps_beta_to_lambda():
    for scheme in Fig1Config().panel_c().scheme_grid:
        assert scheme.tau == 1e-3
        assert scheme.beta == pytest.approx(float(scheme.label.split("=")[1]), rel=1e-12)


# command line

def test_cli_garnet_run_and_sweep(tmp_path, capsys):
    mdp_file = tmp_path / "g.json"
    assert main(["garnet", "generate", "--seed", "4", "--num-states", "12", "--out", str(mdp_file)]) == EXIT_OK
    assert json.loads(mdp_file.read_text())["discount"] == 0.9
    out = tmp_path / "run.csv"
    code = main(["run", "--mdp", str(mdp_file), "--variant", "DA", "--lam", "0.5", "--iterations", "20",
                 "--error-model", "generative", "--seed", "1", "--out", str(out),
                 "--store-trace", str(tmp_path / "t.jsonl")])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["iterations"] == 20 and out.exists()
    assert main(["bound-check", "--trace", str(tmp_path / "t.jsonl"), "--theorem", "1"]) == EXIT_OK
    assert "certified true" in capsys.readouterr().out

    config = _experiment(tmp_path, num_garnets=2)
    (tmp_path / "exp.json").write_text(json.dumps(config.to_dict()))
    sweep_out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(tmp_path / "exp.json"), "--out", str(sweep_out), "--jobs", "2"]) == EXIT_OK
    assert sweep_out.read_text() == format_csv(run_experiment(config, write=False))


def test_cli_fig1(tmp_path):
    code = main(["fig1", "--num-garnets", "1", "--iterations", "3", "--out", str(tmp_path / "f"), "--seed", "2"])
    assert code == EXIT_OK
    assert {p.name for p in (tmp_path / "f").iterdir()} == {"panel_a.csv", "panel_b.csv", "panel_c.csv"}


def test_cli_configuration_errors(tmp_path):
    assert main(["run", "--variant", "DA", "--lam", "-1", "--iterations", "2"]) == EXIT_CONFIG
    assert main(["run", "--variant", "Nope", "--iterations", "2"]) == EXIT_CONFIG
    assert main(["sweep"]) == EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["sweep", "--config", str(tmp_path / "bad.json")]) == EXIT_CONFIG
    assert main(["bound-check", "--trace", str(tmp_path / "missing.jsonl"), "--theorem", "1"]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_cli_certification_failure(tmp_path, capsys):
    # the recorded run on which the plus-sign second bound is violated
    mdp = generate(GarnetParams(), make_rng(1, 1))
    cfg = SchemeConfig("DA", lam=9e-3, tau=1e-3, iterations=200, error_model=ErrorModel.generative())
    write_trace(run(mdp, cfg, make_rng(2, 1)), tmp_path / "t.jsonl")
    args = ["bound-check", "--trace", str(tmp_path / "t.jsonl"), "--theorem", "2", "--stride", "10"]
    assert main(args) == EXIT_UNCERTIFIED
    assert "certified false" in capsys.readouterr().out
    assert main(args + ["--form", "corrected", "--out", str(tmp_path / "r.json")]) == EXIT_OK
    assert json.loads((tmp_path / "r.json").read_text())["certified"] is True
