import csv
import json

import numpy as np
import pytest

from fungraph.cli import config_hash, load_config, main
from fungraph.errors import FunGraphError
from fungraph.funcdata import FunctionalDataset, write_functional_csv
from fungraph.pipeline import FpcaConfig, RunConfig, fit_dataset
from fungraph.neighbours import TuningConfig
from fungraph.simgen import make_pair, sample_dataset

QUICK = ["--n-lambda", "8", "--M", "3"]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("rep01")
    assert main(["simulate", "--scenario", "S3", "--p", "6", "--n-per-group", "30",
                 "--seed", "7", "--out", str(d)]) == 0
    return d


def test_simulate_outputs(sim_dir, tmp_path):
    assert sorted(p.name for p in sim_dir.iterdir()) == ["covariates.csv", "functions.csv", "truth.json"]
    truth = json.loads((sim_dir / "truth.json").read_text())
    assert truth["p"] == 6 and truth["scenario"] == "S3" and truth["n"] == 60
    assert {"u": 0, "v": 1} in truth["G1"]
    again = tmp_path / "again"
    main(["simulate", "--scenario", "S3", "--p", "6", "--n-per-group", "30", "--seed", "7", "--out", str(again)])
    for name in ("functions.csv", "covariates.csv", "truth.json"):
        assert (again / name).read_bytes() == (sim_dir / name).read_bytes()


def test_simulate_p50_dimension():
    pair = make_pair("S3", 50)
    assert pair.theta0.shape == (750, 750)


def test_invalid_scenario_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--scenario", "S9"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_fit_and_evaluate(sim_dir, tmp_path):
    fit_dir = sim_dir / "fit"
    assert main(["fit", str(sim_dir / "functions.csv"), str(sim_dir / "covariates.csv"),
                 "--mode", "both", "--out", str(fit_dir), *QUICK]) == 0
    names = {p.name for p in fit_dir.iterdir()}
    for mode in ("OR", "AND"):
        for stem in ("graph_c0", "graph_c1", "adjacency_c0", "adjacency_c1", "groupgraph_c1"):
            assert any(n.startswith(f"{stem}_{mode}") for n in names)
    manifest = json.loads((fit_dir / "manifest.json").read_text())
    assert set(manifest) >= {"config", "config_sha256", "inputs", "versions", "timings_s"}
    assert len(manifest["inputs"]) == 2
    nodes = json.loads((fit_dir / "node_results.json").read_text())["nodes"]
    assert len(nodes) == 6 and set(nodes[0]["neighbours"]) == {"0", "1"}

    out = tmp_path / "metrics.csv"
    assert main(["evaluate", str(sim_dir), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    per_rep = [r for r in rows if r["replicate"] != "summary"]
    assert len(per_rep) == 6  # 3 graphs x 2 modes
    assert sum(r["replicate"] == "summary" for r in rows) == 6


def test_evaluate_perfect_and_p_mismatch(tmp_path):
    rep = tmp_path / "rep"
    rep.mkdir()
    truth = {"p": 3, "scenario": "manual", "n": 10, "G0": [{"u": 0, "v": 1}], "G1": [], "group1": []}
    (rep / "truth.json").write_text(json.dumps(truth))
    (rep / "graph_c0_OR.json").write_text(json.dumps({"p": 3, "edges": [{"u": 0, "v": 1}]}))
    out = tmp_path / "m.csv"
    assert main(["evaluate", str(rep), "--out", str(out)]) == 0
    row = next(csv.DictReader(out.open()))
    assert row["f1"] == "1" and row["graph"] == "G0"
    (rep / "graph_c0_OR.json").write_text(json.dumps({"p": 4, "edges": []}))
    assert main(["evaluate", str(rep), "--out", str(out)]) != 0


def test_fit_rejects_invalid_input(tmp_path):
    ds = FunctionalDataset.from_arrays(np.random.default_rng(0).normal(size=(12, 3, 20)), np.arange(1, 21) / 20)
    ds.series[2][1][1][5] = np.nan
    path = tmp_path / "bad.csv"
    write_functional_csv(ds, path)
    assert main(["fit", str(path), "--out", str(tmp_path / "fit")]) != 0
    assert not (tmp_path / "fit").exists()


def test_fit_without_covariates_emits_population_graph_only(tmp_path):
    pair = make_pair("S1", 4, M=3)
    ds, _ = sample_dataset(pair, 20, tau=30, seed=2)
    path = tmp_path / "f.csv"
    write_functional_csv(ds, path)
    assert main(["fit", str(path), "--out", str(tmp_path / "fit"), *QUICK]) == 0
    graphs = sorted(p.name for p in (tmp_path / "fit").glob("graph_*"))
    assert graphs == ["graph_c0_OR.json"]


def test_threads_do_not_change_outputs(sim_dir, tmp_path):
    args = ["fit", str(sim_dir / "functions.csv"), str(sim_dir / "covariates.csv"), *QUICK]
    assert main([*args, "--threads", "1", "--out", str(tmp_path / "t1")]) == 0
    assert main([*args, "--threads", "8", "--out", str(tmp_path / "t8")]) == 0
    for f in sorted((tmp_path / "t1").iterdir()):
        if f.name != "manifest.json":
            assert f.read_bytes() == (tmp_path / "t8" / f.name).read_bytes(), f.name


def test_config_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[fpca]\nM = 4\npve = 0.9\n[tuning]\nn_lambda = 7\neps_values = 0.1, 0.2\n[run]\nmode = AND\n")
    cfg = load_config(ini)
    assert cfg.fpca.M == 4 and cfg.fpca.pve == 0.9
    assert cfg.tuning.n_lambda == 7 and cfg.tuning.eps_values == (0.1, 0.2)
    assert cfg.mode == "AND"
    assert config_hash(cfg) == config_hash(load_config(ini))
    assert config_hash(cfg) != config_hash(load_config(ini, {"seed": 3}))
    assert config_hash(load_config(ini, {"threads": 4})) == config_hash(cfg)
    bad = tmp_path / "bad.ini"
    bad.write_text("[tuning]\nlambda_count = 3\n")
    with pytest.raises(FunGraphError):
        load_config(bad)
    bad.write_text("[tuning]\nfolds = 1\n")
    with pytest.raises(FunGraphError):
        load_config(bad)


def test_bench_small(tmp_path, capsys):
    assert main(["bench", "--p", "4", "--n-per-group", "15", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "bench.csv").open()))
    assert rows[0]["p"] == "4" and float(rows[0]["total_s"]) > 0


def test_pipeline_thread_determinism_in_process():
    pair = make_pair("S3", 6, M=3)
    ds, X = sample_dataset(pair, 25, tau=30, seed=4)
    cfg = RunConfig(fpca=FpcaConfig(M=3), tuning=TuningConfig(n_lambda=6))
    a = fit_dataset(ds, X, cfg)
    b = fit_dataset(ds, X, RunConfig(fpca=cfg.fpca, tuning=cfg.tuning, threads=3))
    assert [r.to_dict(include_blocks=True) for r in a.results] == [r.to_dict(include_blocks=True) for r in b.results]
