"""Multivariate functional samples, covariate encoding and CSV ingestion.

Functions are exchanged as long-format CSV (``sample_id,node_id,time,value``),
one row per observation point. Covariates live in a wide CSV keyed by
``sample_id``. Nodes and samples are ordered lexicographically by id.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, EncodingError, ParseError, SchemaError

FUNCTION_COLUMNS = ("sample_id", "node_id", "time", "value")


@dataclass
class FunctionalDataset:
    """``n`` samples of ``p`` discretely observed curves.

    ``series[i][j]`` is a ``(times, values)`` pair of 1-d arrays holding the
    original time stamps, or ``None`` when sample ``i`` lacks node ``j``.
    Times are mapped to the unit interval with ``(t - origin) / scale``.
    """

    sample_ids: list[str]
    node_ids: list[str]
    series: list[list[tuple[np.ndarray, np.ndarray] | None]]
    origin: float = 0.0
    scale: float = 1.0

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    @property
    def p(self) -> int:
        return len(self.node_ids)

    @property
    def interval(self) -> tuple[float, float]:
        """Original time interval corresponding to the unit domain."""
        return self.origin, self.origin + self.scale

    def unit_times(self, t):
        return (np.asarray(t, dtype=float) - self.origin) / self.scale

    def common_grid(self) -> np.ndarray | None:
        """Shared unit-time grid, or ``None`` when samples use different grids."""
        ref = None
        for row in self.series:
            for s in row:
                if s is None:
                    return None
                if ref is None:
                    ref = s[0]
                elif s[0].shape != ref.shape or not np.array_equal(s[0], ref):
                    return None
        return None if ref is None else self.unit_times(ref)

    def values_array(self) -> np.ndarray:
        """``n x p x L`` array of values; requires a common grid."""
        if self.common_grid() is None:
            raise DataError("samples do not share a common time grid")
        return np.stack([np.stack([s[1] for s in row]) for row in self.series])

    @classmethod
    def from_arrays(cls, values, times, sample_ids=None, node_ids=None) -> "FunctionalDataset":
        values = np.asarray(values, dtype=float)
        times = np.asarray(times, dtype=float)
        n, p, L = values.shape
        if times.shape != (L,):
            raise DataError(f"times has shape {times.shape}, expected ({L},)")
        if sample_ids is None:
            sample_ids = [f"s{i + 1:0{len(str(n))}d}" for i in range(n)]
        if node_ids is None:
            node_ids = [f"n{j + 1:0{len(str(p))}d}" for j in range(p)]
        series = [[(times.copy(), values[i, j].copy()) for j in range(p)] for i in range(n)]
        origin, scale = _unit_map(series)
        return cls(list(sample_ids), list(node_ids), series, origin, scale)


def _unit_map(series) -> tuple[float, float]:
    """Affine map sending the observed times into (0, 1].

    Data already inside (0, 1] are left untouched. Otherwise the interval
    ``[t_min - h, t_max]`` is mapped onto ``[0, 1]`` where ``h`` is the median
    sampling step, so the first observation lands one step after 0.
    """
    ts = [s[0] for row in series for s in row if s is not None and len(s[0])]
    if not ts:
        return 0.0, 1.0
    lo = min(float(t[0]) for t in ts)
    hi = max(float(t[-1]) for t in ts)
    if lo > 0.0 and hi <= 1.0:
        return 0.0, 1.0
    steps = np.concatenate([np.diff(t) for t in ts])
    steps = steps[steps > 0]
    h = float(np.median(steps)) if steps.size else 1.0
    origin = lo - h
    return origin, hi - origin


def load_functional_csv(path, schema: Mapping[str, str] | None = None) -> FunctionalDataset:
    """Read long-format functional observations.

    ``schema`` maps the canonical names ``sample_id, node_id, time, value`` to
    the header names used in the file.
    """
    cols = {c: c for c in FUNCTION_COLUMNS}
    if schema:
        cols.update(schema)
    groups: dict[tuple[str, str], list[tuple[float, float]]] = defaultdict(list)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [cols[c] for c in FUNCTION_COLUMNS if cols[c] not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}; header is {header}")
        for lineno, row in enumerate(reader, start=2):
            sid, nid = row[cols["sample_id"]], row[cols["node_id"]]
            raw_t, raw_v = row[cols["time"]], row[cols["value"]]
            if not sid or not nid or raw_t in (None, "") or raw_v in (None, ""):
                raise ParseError(f"{path}:{lineno}: missing cell")
            try:
                t, v = float(raw_t), float(raw_v)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric time/value {raw_t!r}, {raw_v!r}") from None
            groups[(sid, nid)].append((t, v))

    sample_ids = sorted({k[0] for k in groups})
    node_ids = sorted({k[1] for k in groups})
    series: list[list] = []
    for sid in sample_ids:
        row = []
        for nid in node_ids:
            pts = groups.get((sid, nid))
            if pts is None:
                row.append(None)
                continue
            pts.sort(key=lambda tv: tv[0])
            arr = np.array(pts, dtype=float)
            dup = np.nonzero(np.diff(arr[:, 0]) == 0)[0]
            if dup.size:
                raise DataError(f"duplicate time {arr[dup[0], 0]!r} for sample {sid!r}, node {nid!r}")
            row.append((arr[:, 0].copy(), arr[:, 1].copy()))
        series.append(row)
    origin, scale = _unit_map(series)
    return FunctionalDataset(sample_ids, node_ids, series, origin, scale)


def write_functional_csv(ds: FunctionalDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FUNCTION_COLUMNS)
        for sid, row in zip(ds.sample_ids, ds.series):
            for nid, s in zip(ds.node_ids, row):
                if s is None:
                    continue
                for t, v in zip(*s):
                    w.writerow((sid, nid, f"{t:.17g}", f"{v:.17g}"))


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Issue:
    severity: str
    location: tuple
    message: str


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    @property
    def errors(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == "error"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __len__(self):
        return len(self.issues)

    def __iter__(self):
        return iter(self.issues)

    def raise_for_errors(self):
        if self.errors:
            lines = "\n".join(f"  {i.location}: {i.message}" for i in self.errors[:20])
            raise DataError(f"dataset failed validation ({len(self.errors)} errors):\n{lines}")


def validate(ds: FunctionalDataset) -> ValidationReport:
    issues: list[Issue] = []
    if ds.n < 2:
        issues.append(Issue("error", ("dataset",), f"need at least 2 samples, got {ds.n}"))
    if ds.p < 2:
        issues.append(Issue("error", ("dataset",), f"need at least 2 nodes, got {ds.p}"))
    for i, row in enumerate(ds.series):
        sid = ds.sample_ids[i]
        if len(row) != ds.p:
            issues.append(Issue("error", (sid,), f"expected {ds.p} node series, found {len(row)}"))
        for j, s in enumerate(row):
            nid = ds.node_ids[j] if j < ds.p else str(j)
            if s is None:
                issues.append(Issue("error", (sid, nid), "missing node series"))
                continue
            t, v = s
            if t.size == 0:
                issues.append(Issue("error", (sid, nid), "empty series"))
                continue
            if t.shape != v.shape:
                issues.append(Issue("error", (sid, nid), "times and values differ in length"))
                continue
            bad_t = np.nonzero(np.diff(t) <= 0)[0]
            if bad_t.size:
                issues.append(Issue("error", (sid, nid, int(bad_t[0]) + 1), "times not strictly increasing"))
            for idx in np.nonzero(~np.isfinite(v))[0]:
                issues.append(Issue("error", (sid, nid, int(idx)), f"non-finite value {v[idx]!r}"))
            for idx in np.nonzero(~np.isfinite(t))[0]:
                issues.append(Issue("error", (sid, nid, int(idx)), f"non-finite time {t[idx]!r}"))
    return ValidationReport(issues)


# ---------------------------------------------------------------- covariates


@dataclass(frozen=True)
class Categorical:
    """Categorical covariate coded against ``reference``."""

    reference: str
    levels: tuple[str, ...] | None = None


@dataclass
class CovariateDesign:
    """``n x (q+1)`` design whose first column is the intercept."""

    matrix: np.ndarray
    names: list[str]
    kinds: list[str]
    sample_ids: list[str] | None = None
    references: dict[str, str] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def q(self) -> int:
        return self.matrix.shape[1] - 1

    def is_binary(self, c: int) -> bool:
        col = self.matrix[:, c]
        return c > 0 and bool(np.all((col == 0) | (col == 1)))

    def dummy_columns(self) -> list[int]:
        return [c for c in range(1, self.q + 1) if self.is_binary(c)]

    @classmethod
    def intercept_only(cls, n: int, sample_ids=None) -> "CovariateDesign":
        return cls(np.ones((n, 1)), ["(intercept)"], ["intercept"], sample_ids)


def _is_number(s) -> bool:
    if isinstance(s, (int, float, np.number)):
        return True
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False


def encode_covariates(raw: Mapping[str, Sequence], spec: Mapping[str, object] | None = None,
                      sample_ids=None) -> CovariateDesign:
    """Build the design matrix with a leading intercept column.

    ``spec`` maps each variable to ``"continuous"`` or a :class:`Categorical`.
    Without a spec, numeric columns are continuous and anything else is
    categorical with the lexicographically first level as reference.
    """
    if spec is None:
        spec = {}
        for name, vals in raw.items():
            if all(_is_number(v) for v in vals):
                spec[name] = "continuous"
            else:
                spec[name] = Categorical(sorted({str(v) for v in vals})[0])
    lengths = {len(raw[name]) for name in spec}
    if len(lengths) > 1:
        raise EncodingError(f"covariate columns differ in length: {sorted(lengths)}")
    n = lengths.pop() if lengths else (len(sample_ids) if sample_ids is not None else 0)

    cols = [np.ones(n)]
    names = ["(intercept)"]
    kinds = ["intercept"]
    refs: dict[str, str] = {}
    for name, how in spec.items():
        if name not in raw:
            raise EncodingError(f"covariate {name!r} not present in table")
        vals = raw[name]
        if how == "continuous":
            try:
                col = np.array([float(v) for v in vals])
            except (TypeError, ValueError):
                raise EncodingError(f"covariate {name!r} declared continuous but holds non-numeric values") from None
            if not np.all(np.isfinite(col)):
                raise EncodingError(f"covariate {name!r} has non-finite values")
            if n > 1 and np.all(col == col[0]):
                raise EncodingError(f"covariate {name!r} is constant")
            cols.append(col)
            names.append(name)
            kinds.append("continuous")
        elif isinstance(how, Categorical):
            labels = [str(v) for v in vals]
            levels = list(how.levels) if how.levels is not None else sorted(set(labels))
            if how.reference not in levels:
                raise EncodingError(f"reference level {how.reference!r} not among levels of {name!r}")
            unseen = sorted(set(labels) - set(levels))
            if unseen:
                raise EncodingError(f"covariate {name!r} has unseen levels {unseen}")
            if len(levels) < 2:
                raise EncodingError(f"covariate {name!r} has a single level; nothing to contrast")
            refs[name] = how.reference
            for lev in levels:
                if lev == how.reference:
                    continue
                cols.append(np.array([1.0 if s == lev else 0.0 for s in labels]))
                names.append(f"{name}[{lev}]")
                kinds.append("dummy")
        else:
            raise EncodingError(f"unknown encoding {how!r} for {name!r}")
    return CovariateDesign(np.column_stack(cols), names, kinds,
                           list(sample_ids) if sample_ids is not None else None, refs)


def load_covariates_csv(path, sample_ids: Sequence[str] | None = None) -> tuple[list[str], dict[str, list[str]]]:
    """Read ``sample_id,<var1>,...`` into per-variable string columns.

    When ``sample_ids`` is given, rows are reordered to match it and every
    listed sample must be present.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "sample_id" not in header:
            raise SchemaError(f"{path}: covariate file needs a 'sample_id' column")
        variables = [h for h in header if h != "sample_id"]
        rows: dict[str, dict] = {}
        for lineno, row in enumerate(reader, start=2):
            sid = row["sample_id"]
            for v in variables:
                if row.get(v) in (None, ""):
                    raise ParseError(f"{path}:{lineno}: missing value for {v!r}")
            if sid in rows:
                raise DataError(f"{path}:{lineno}: duplicate sample_id {sid!r}")
            rows[sid] = row
    order = list(sample_ids) if sample_ids is not None else sorted(rows)
    absent = [s for s in order if s not in rows]
    if absent:
        raise DataError(f"{path}: no covariates for samples {absent[:5]}")
    return order, {v: [rows[s][v] for s in order] for v in variables}


def write_covariates_csv(path, sample_ids: Sequence[str], columns: Mapping[str, Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", *columns])
        for i, sid in enumerate(sample_ids):
            w.writerow([sid, *(_fmt(columns[c][i]) for c in columns)])


def _fmt(v) -> str:
    if isinstance(v, float) and math.isfinite(v):
        return f"{v:.17g}"
    return str(v)


def parse_covariate_spec(items: Sequence[str]) -> dict[str, object]:
    """Parse ``name=continuous`` / ``name=categorical:REF`` strings."""
    out: dict[str, object] = {}
    for item in items:
        name, _, how = item.partition("=")
        if how == "continuous":
            out[name] = "continuous"
        elif how.startswith("categorical:"):
            out[name] = Categorical(how.split(":", 1)[1])
        else:
            raise EncodingError(f"cannot parse covariate spec {item!r}")
    return out


__all__ = [
    "FunctionalDataset", "CovariateDesign", "Categorical", "ValidationReport", "Issue",
    "load_functional_csv", "write_functional_csv", "validate", "encode_covariates",
    "load_covariates_csv", "write_covariates_csv", "parse_covariate_spec",
]

