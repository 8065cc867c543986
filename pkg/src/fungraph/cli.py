"""Command-line entry point: ``fungraph simulate | fit | evaluate | bench``."""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import FunGraphError
from .funcdata import (
    encode_covariates,
    load_covariates_csv,
    load_functional_csv,
    parse_covariate_spec,
    validate,
    write_covariates_csv,
    write_functional_csv,
)
from .graphs import MODES, read_graph_json, write_adjacency_csv
from .metrics import metric_row, summary_rows, write_metrics_csv
from .neighbours import TuningConfig
from .pipeline import FpcaConfig, RunConfig, SmoothingConfig, fit_dataset
from .simgen import SCENARIOS, make_pair, read_truth, sample_dataset, true_graphs, write_truth

log = logging.getLogger("fungraph")

BENCH_P = (10, 15, 25, 50)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- config

_SECTIONS = {"smoothing": SmoothingConfig, "fpca": FpcaConfig, "tuning": TuningConfig}


def _coerce(cls, key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise FunGraphError(f"unknown config key [{cls.__name__}] {key}")
    default = fields[key].default
    raw = raw.strip()
    if raw.lower() in ("", "none", "auto"):
        return None
    if isinstance(default, tuple) or key == "eps_values":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int) or key in ("M", "M_max"):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read an INI file with optional [smoothing], [fpca], [tuning] and [run] sections."""
    parts: dict[str, dict] = {name: {} for name in _SECTIONS}
    run: dict = {}
    if path is not None:
        cp = configparser.ConfigParser()
        cp.optionxform = str  # keys are dataclass field names, case included
        if not cp.read(path, encoding="utf-8"):
            raise FunGraphError(f"cannot read config file {path}")
        for section in cp.sections():
            if section in _SECTIONS:
                for key, raw in cp.items(section):
                    parts[section][key] = _coerce(_SECTIONS[section], key, raw)
            elif section == "run":
                for key, raw in cp.items(section):
                    if key not in ("mode", "threads", "seed"):
                        raise FunGraphError(f"unknown config key [run] {key}")
                    run[key] = raw.strip() if key == "mode" else int(raw)
            else:
                raise FunGraphError(f"unknown config section [{section}]")
    run.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "seed" in run:
        parts["tuning"]["seed"] = run["seed"]
    try:
        cfg = RunConfig(SmoothingConfig(**parts["smoothing"]), FpcaConfig(**parts["fpca"]),
                        TuningConfig(**parts["tuning"]), **run)
    except (TypeError, ValueError) as exc:
        raise FunGraphError(f"invalid configuration: {exc}") from exc
    return cfg


def config_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d.pop("threads")  # does not affect results
    return d


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(config_dict(cfg), sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pair = make_pair(args.scenario, args.p)
    ds, X = sample_dataset(pair, args.n_per_group, tau=args.tau, sigma2=args.sigma2, seed=args.seed)
    write_functional_csv(ds, out / "functions.csv")
    write_covariates_csv(out / "covariates.csv", ds.sample_ids, {"group": [int(v) for v in X.matrix[:, 1]]})
    write_truth(out / "truth.json", true_graphs(pair), ds.node_ids,
                {"n": ds.n, "n_per_group": args.n_per_group, "seed": args.seed, "M_star": pair.M,
                 "tau": args.tau, "sigma2": args.sigma2, "diagonal_shift": float(f"{pair.shift:.17g}")})
    log.info("wrote %s (n=%d, p=%d, scenario %s)", out, ds.n, ds.p, args.scenario)
    return 0


# ---------------------------------------------------------------- fit

def _load_design(ds, path, specs):
    if path is None:
        return None
    order, raw = load_covariates_csv(path, ds.sample_ids)
    spec = parse_covariate_spec(specs) if specs else None
    return encode_covariates(raw, spec, order)


def run_fit(functions, covariates, cfg: RunConfig, out, modes, covariate_specs=None) -> dict:
    out = Path(out)
    ds = load_functional_csv(functions)
    report = validate(ds)
    if not report.ok:
        for issue in report.errors:
            log.error("%s", issue)
        report.raise_for_errors()
    design = _load_design(ds, covariates, covariate_specs)
    fit = fit_dataset(ds, design, cfg)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for mode in modes:
        g = fit.graphs(mode)
        for c in range(g.q + 1):
            _dump_json(out / f"graph_c{c}_{mode}.json", g.graph_dict(c))
            write_adjacency_csv(out / f"adjacency_c{c}_{mode}.csv", g.adjacency(c), g.node_ids)
            written += [f"graph_c{c}_{mode}.json", f"adjacency_c{c}_{mode}.csv"]
            if c in g.group_edges:
                _dump_json(out / f"groupgraph_c{c}_{mode}.json", g.group_dict(c))
                written.append(f"groupgraph_c{c}_{mode}.json")
    _dump_json(out / "node_results.json", {
        "M": fit.M, "per_node_M": fit.per_node_M, "covariates": fit.design.names,
        "nodes": [r.to_dict(fit.node_ids) for r in fit.results]})
    manifest = {
        "config": config_dict(cfg),
        "config_sha256": config_hash(cfg),
        "inputs": {str(p): _sha256(p) for p in (functions, covariates) if p is not None},
        "modes": list(modes),
        "outputs": sorted(written + ["node_results.json"]),
        "M": fit.M,
        "versions": {"fungraph": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "threads": cfg.threads,
        "timings_s": fit.timings,
    }
    _dump_json(out / "manifest.json", manifest)
    return manifest


def _modes(mode: str) -> list[str]:
    return list(MODES) if mode.lower() == "both" else [mode.upper()]


def cmd_fit(args) -> int:
    cfg = load_config(args.config, {"mode": args.mode if args.mode != "both" else None,
                                    "threads": args.threads, "seed": args.seed})
    cfg = _apply_flag_overrides(cfg, args)
    run_fit(args.functions, args.covariates, cfg, args.out, _modes(args.mode or cfg.mode), args.covariate)
    return 0


def _apply_flag_overrides(cfg: RunConfig, args) -> RunConfig:
    fp = cfg.fpca
    if args.M is not None:
        fp = dataclasses.replace(fp, M=args.M)
    if args.pve is not None:
        fp = dataclasses.replace(fp, pve=args.pve)
    tu = cfg.tuning
    if args.folds is not None:
        tu = dataclasses.replace(tu, folds=args.folds)
    if args.fraction is not None:
        tu = dataclasses.replace(tu, fraction=args.fraction)
    if args.n_lambda is not None:
        tu = dataclasses.replace(tu, n_lambda=args.n_lambda)
    return dataclasses.replace(cfg, fpca=fp, tuning=tu)


# ---------------------------------------------------------------- evaluate

def _fit_dir(rep: Path) -> Path:
    return rep / "fit" if (rep / "fit").is_dir() else rep


def evaluate_dirs(dirs, modes=None) -> list[dict]:
    rows = []
    for d in map(Path, dirs):
        truth_path = d / "truth.json"
        if not truth_path.exists():
            raise FunGraphError(f"{d}: no truth.json")
        with open(truth_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        truth = read_truth(truth_path)
        fd = _fit_dir(d)
        found = modes or [m for m in MODES if (fd / f"graph_c0_{m}.json").exists()]
        if not found:
            raise FunGraphError(f"{fd}: no fitted graph files")
        for mode in found:
            for graph, fname, tset in (("G0", f"graph_c0_{mode}.json", truth.G0),
                                       ("G1", f"graph_c1_{mode}.json", truth.G1),
                                       ("group1", f"groupgraph_c1_{mode}.json", truth.group1)):
                path = fd / fname
                if not path.exists():
                    if graph == "G0":
                        raise FunGraphError(f"{path} missing")
                    continue
                est = read_graph_json(path)
                if est["p"] != truth.p:
                    raise FunGraphError(f"{path}: p={est['p']} but truth has p={truth.p}")
                rows.append(metric_row(d.name, truth.scenario, truth.p, meta.get("n", ""), graph, mode,
                                       est["edge_set"], tset))
    return rows


def cmd_evaluate(args) -> int:
    rows = evaluate_dirs(args.dirs, _modes(args.mode) if args.mode else None)
    rows += summary_rows(rows)
    out = Path(args.out)
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "metrics.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out, rows)
    for r in rows:
        if r["replicate"] == "summary":
            print(f"{r['scenario']} p={r['p']} n={r['n']} {r['graph']} {r['mode']}: "
                  f"F1 min {r['f1_min']:.3f} mean {r['f1_mean']:.3f} max {r['f1_max']:.3f}")
    return 0


# ---------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    cfg = load_config(args.config, {"threads": args.threads, "seed": args.seed})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for p in args.p:
        pair = make_pair(args.scenario, p)
        for r in range(args.replicates):
            ds, X = sample_dataset(pair, args.n_per_group, seed=args.seed + r)
            t0 = time.perf_counter()
            fit = fit_dataset(ds, X, cfg)
            total = time.perf_counter() - t0
            rows.append({"p": p, "n": ds.n, "replicate": r, "threads": cfg.threads, "M": fit.M,
                         "preprocess_s": fit.timings["preprocess_s"],
                         "node_fits_s": fit.timings["node_fits_s"], "total_s": total})
            print(f"p={p:>3} n={ds.n} rep={r} M={fit.M} total {total:.2f}s", flush=True)
    with open(out / "bench.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
    return 0


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for node fits")
    p.add_argument("--out", default=out_default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fungraph", description="Conditional functional graphical models.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic two-group dataset")
    s.add_argument("--scenario", choices=SCENARIOS, default="S3")
    s.add_argument("--p", type=int, default=10)
    s.add_argument("--n-per-group", type=int, default=100)
    s.add_argument("--tau", type=int, default=100, help="observation points per curve")
    s.add_argument("--sigma2", type=float, default=0.5, help="measurement noise variance")
    _common(s, "sim")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="estimate graphs from functional data")
    f.add_argument("functions", help="long-format CSV: sample_id,node_id,time,value")
    f.add_argument("covariates", nargs="?", help="CSV: sample_id,<var1>,...")
    f.add_argument("--config", help="INI file with [smoothing] [fpca] [tuning] [run] sections")
    f.add_argument("--mode", choices=["OR", "AND", "both"], default=None)
    f.add_argument("--covariate", action="append", metavar="NAME=KIND",
                   help="encoding, e.g. group=categorical:0 or age=continuous (repeatable)")
    f.add_argument("--M", type=int, help="fixed truncation level")
    f.add_argument("--pve", type=float, help="explained-variance threshold for choosing M")
    f.add_argument("--folds", type=int)
    f.add_argument("--fraction", type=float, help="fraction of (lambda, eps) pairs to score")
    f.add_argument("--n-lambda", type=int)
    _common(f, "fit")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="score fitted graphs against truth.json")
    e.add_argument("dirs", nargs="+", help="replicate directories holding truth.json and fit outputs")
    e.add_argument("--mode", choices=["OR", "AND", "both"])
    _common(e, "metrics.csv")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="time end-to-end fits for several node counts")
    b.add_argument("--p", type=int, nargs="+", default=list(BENCH_P))
    b.add_argument("--n-per-group", type=int, default=200)
    b.add_argument("--scenario", choices=SCENARIOS, default="S3")
    b.add_argument("--replicates", type=int, default=1)
    b.add_argument("--config")
    _common(b, "bench")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FunGraphError as exc:
        print(f"fungraph {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"fungraph {args.command}: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
