"""Edge-recovery scores on the upper triangle of undirected graphs.

Degenerate ratios follow one convention: when there is nothing to find and
nothing was found, precision, TPR and F1 are 1. An empty estimate against a
nonempty truth gets precision 0. FPR with no negatives is 0.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

from .errors import FunGraphError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _norm_edges(edges, p: int) -> set[tuple[int, int]]:
    out = set()
    for u, v in edges:
        if u == v:
            raise FunGraphError(f"self-loop ({u}, {v}) is not an edge")
        if not (0 <= u < p and 0 <= v < p):
            raise FunGraphError(f"edge ({u}, {v}) outside node range 0..{p - 1}")
        out.add((min(u, v), max(u, v)))
    return out


def confusion(estimated, truth, p: int) -> ConfusionCounts:
    est, tru = _norm_edges(estimated, p), _norm_edges(truth, p)
    tp = len(est & tru)
    fp = len(est - tru)
    fn = len(tru - est)
    return ConfusionCounts(tp, fp, fn, p * (p - 1) // 2 - tp - fp - fn)


def scores(c: ConfusionCounts) -> dict[str, float]:
    if c.tp + c.fp:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision = 1.0 if c.fn == 0 else 0.0
    tpr = c.tp / (c.tp + c.fn) if c.tp + c.fn else 1.0
    fpr = c.fp / (c.fp + c.tn) if c.fp + c.tn else 0.0
    denom = 2 * c.tp + c.fp + c.fn
    f1 = 2 * c.tp / denom if denom else 1.0
    return {"precision": precision, "tpr": tpr, "fpr": fpr, "f1": f1}


METRIC_COLUMNS = ("replicate", "scenario", "p", "n", "graph", "mode",
                  "tp", "fp", "fn", "tn", "precision", "tpr", "fpr", "f1", "f1_min", "f1_mean", "f1_max")


def metric_row(replicate, scenario, p, n, graph, mode, est, truth) -> dict:
    cc = confusion(est, truth, p)
    return {"replicate": replicate, "scenario": scenario, "p": p, "n": n, "graph": graph, "mode": mode,
            **asdict(cc), **scores(cc)}


def summary_rows(rows: list[dict]) -> list[dict]:
    """Min/mean/max F1 per (scenario, p, n, graph, mode)."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r["scenario"], r["p"], r["n"], r["graph"], r["mode"]), []).append(r["f1"])
    out = []
    for (scen, p, n, graph, mode), f1s in groups.items():
        out.append({"replicate": "summary", "scenario": scen, "p": p, "n": n, "graph": graph, "mode": mode,
                    "f1_min": min(f1s), "f1_mean": sum(f1s) / len(f1s), "f1_max": max(f1s)})
    return out


def write_metrics_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, METRIC_COLUMNS, lineterminator="\n", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
