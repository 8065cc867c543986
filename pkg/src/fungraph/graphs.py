"""Undirected per-covariate graphs from node-wise neighbourhoods."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AggregationError, FunGraphError
from .neighbours import NodeResult

Edge = tuple[int, int]
MODES = ("OR", "AND")


def _edge(a: int, b: int) -> Edge:
    return (a, b) if a < b else (b, a)


def _by_node(results: Sequence[NodeResult]) -> dict[int, NodeResult]:
    out = {r.node: r for r in results}
    missing = sorted(set(range(len(results))) - set(out))
    if missing or len(out) != len(results):
        raise AggregationError(f"need one result per node 0..{len(results) - 1}; missing {missing}")
    return out


def symmetrize_sets(neighbours: Sequence[Sequence[int]], mode: str = "OR") -> set[Edge]:
    """Edges from directed neighbour lists ``neighbours[j]``."""
    mode = mode.upper()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    sets = [set(s) for s in neighbours]
    edges = set()
    for j, nb in enumerate(sets):
        for k in nb:
            if k == j:
                continue
            if mode == "OR" or j in sets[k]:
                edges.add(_edge(j, k))
    return edges


def symmetrize(results: Sequence[NodeResult], mode: str = "OR", c: int = 0) -> set[Edge]:
    by = _by_node(results)
    return symmetrize_sets([by[j].neighbours[c] for j in range(len(by))], mode)


def edge_weights(results: Sequence[NodeResult], edges, c: int) -> dict[Edge, float]:
    """Combine directed relative effects into one weight per differential edge.

    One-sided selections keep their own effect; mutual selections use the
    geometric mean. Emergent (+inf) effects propagate.
    """
    if c < 1:
        raise ValueError("weights are defined for covariates c >= 1 only")
    by = _by_node(results)
    out: dict[Edge, float] = {}
    for u, v in sorted(edges):
        e_uv = by[v].effects.get(c, {}).get(u)  # u selected in v's regression
        e_vu = by[u].effects.get(c, {}).get(v)
        if e_uv is not None and e_vu is not None:
            out[(u, v)] = math.inf if math.isinf(e_uv) or math.isinf(e_vu) else math.sqrt(e_uv * e_vu)
        elif e_uv is not None:
            out[(u, v)] = e_uv
        elif e_vu is not None:
            out[(u, v)] = e_vu
        else:
            raise AggregationError(f"edge {(u, v)} selected by neither endpoint for covariate {c}")
    return out


def group_graph(results: Sequence[NodeResult], c: int, mode: str = "OR", design=None) -> set[Edge]:
    """Graph of the group coded 1 by binary covariate ``c``.

    Node ``j`` keeps ``k`` when ``||B[0,k] + B[c,k]||_F`` exceeds the node's
    own threshold.
    """
    if c < 1:
        raise ValueError("group graphs need a covariate index c >= 1")
    if design is not None and not design.is_binary(c):
        raise FunGraphError(f"covariate {c} ({design.names[c]}) is not binary; group graph undefined")
    by = _by_node(results)
    nbrs = []
    for j in range(len(by)):
        r = by[j]
        B = r.coefficients.blocks
        norms = np.sqrt(np.sum((B[0] + B[c]) ** 2, axis=(1, 2)))
        nbrs.append([k for k in range(len(by)) if k != j and norms[k] > r.eps])
    return symmetrize_sets(nbrs, mode)


def to_adjacency(edges, p: int, weights: dict[Edge, float] | None = None) -> np.ndarray:
    A = np.zeros((p, p))
    for u, v in edges:
        if u == v:
            raise ValueError("self-loops are not allowed")
        w = 1.0 if weights is None else weights[_edge(u, v)]
        A[u, v] = A[v, u] = w
    return A


@dataclass
class ConditionalGraphs:
    p: int
    mode: str
    node_ids: list[str]
    covariates: list[str]
    edges: list[set[Edge]]
    weights: dict[int, dict[Edge, float]] = field(default_factory=dict)
    group_edges: dict[int, set[Edge]] = field(default_factory=dict)

    @property
    def q(self) -> int:
        return len(self.edges) - 1

    def adjacency(self, c: int, weighted: bool = True) -> np.ndarray:
        return to_adjacency(self.edges[c], self.p, self.weights.get(c) if weighted and c > 0 else None)

    def graph_dict(self, c: int) -> dict:
        return graph_json(self.edges[c], self.p, self.mode, c, self.covariates[c],
                          self.weights.get(c) if c > 0 else None, self.node_ids, kind="conditional")

    def group_dict(self, c: int) -> dict:
        return graph_json(self.group_edges[c], self.p, self.mode, c, self.covariates[c], None,
                          self.node_ids, kind="group")


def build_graphs(results: Sequence[NodeResult], design, mode: str = "OR", node_ids=None) -> ConditionalGraphs:
    p = len(results)
    node_ids = list(node_ids) if node_ids is not None else [str(j) for j in range(p)]
    q = results[0].q
    edges = [symmetrize(results, mode, c) for c in range(q + 1)]
    weights = {c: edge_weights(results, edges[c], c) for c in range(1, q + 1)}
    groups = {}
    for c in range(1, q + 1):
        if design is None or design.is_binary(c):
            groups[c] = group_graph(results, c, mode)
    names = list(design.names) if design is not None else ["(intercept)", *[f"x{c}" for c in range(1, q + 1)]]
    return ConditionalGraphs(p, mode.upper(), node_ids, names, edges, weights, groups)


def graph_json(edges, p: int, mode: str, c: int, name: str, weights=None, node_ids=None,
               kind: str = "conditional") -> dict:
    rows = []
    for u, v in sorted(edges):
        row: dict = {"u": int(u), "v": int(v)}
        if weights is not None:
            w = weights[(u, v)]
            if math.isinf(w):
                row["weight"] = "inf"
                row["emergent"] = True
            else:
                row["weight"] = float(f"{w:.17g}")
                row["emergent"] = False
        rows.append(row)
    out = {"p": p, "mode": mode, "covariate": c, "covariate_name": name, "kind": kind, "edges": rows}
    if node_ids is not None:
        out["nodes"] = list(node_ids)
    return out


def read_graph_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    d["edge_set"] = {_edge(e["u"], e["v"]) for e in d["edges"]}
    return d


def write_adjacency_csv(path, A: np.ndarray, node_ids: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", *node_ids])
        for nid, row in zip(node_ids, A):
            w.writerow([nid, *(_cell(v) for v in row)])


def _cell(v: float) -> str:
    if math.isinf(v):
        return "inf"
    if v == 0:
        return "0"
    return f"{v:.17g}"
