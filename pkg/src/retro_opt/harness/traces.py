"""Trace files and cross-replication aggregation.

A trace CSV holds one row per :class:`OuterIterationRecord` followed by run
metadata columns. Floats are written with ``repr`` so parsing a file gives
back exactly the in-memory values. ``oracle work`` counts every per-sample
evaluation, function-only line-search trials included; ``gradient evals``
counts only evaluations that produced a gradient.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import fields
from pathlib import Path

import numpy as np

from ..driver import OuterIterationRecord, RunTrace

__all__ = [
    "RECORD_COLUMNS",
    "META_COLUMNS",
    "TRACE_COLUMNS",
    "AXES",
    "trace_to_csv",
    "write_trace",
    "read_trace",
    "parse_trace_csv",
    "aggregate_records",
    "aggregate_dir",
    "dumps_json",
]

RECORD_COLUMNS = tuple(f.name for f in fields(OuterIterationRecord))
META_COLUMNS = ("algorithm", "replication", "seed", "config_fingerprint")
TRACE_COLUMNS = RECORD_COLUMNS + META_COLUMNS
AXES = {
    "oracle_work": "cumulative_oracle_work",
    "gradient_evals": "cumulative_gradient_evals",
    "outer_iteration": "k",
}
_INT_COLUMNS = {"k", "M_k", "inner_iterations", "cumulative_oracle_work", "cumulative_gradient_evals",
                "grad_calls", "value_calls", "sigma_evals"}
_STR_COLUMNS = {"inner_status"}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def trace_to_csv(trace: RunTrace, replication: int = 0) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    meta = (trace.algorithm, replication, trace.seed, trace.config_fingerprint)
    for rec in trace.records:
        w.writerow([_fmt(getattr(rec, c)) for c in RECORD_COLUMNS] + [_fmt(m) for m in meta])
    return buf.getvalue()


def write_trace(trace: RunTrace, path, replication: int = 0) -> Path:
    path = Path(path)
    path.write_text(trace_to_csv(trace, replication))
    return path


def _parse(col, text):
    if col in _STR_COLUMNS:
        return text
    if text == "":
        return None
    if col in _INT_COLUMNS:
        return int(text)
    return float(text)


def parse_trace_csv(text: str) -> tuple[list[OuterIterationRecord], dict]:
    """Records and metadata from trace CSV text; rejects a changed schema."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError("trace header does not match the record schema")
    records = []
    meta = {}
    for row in rows[1:]:
        vals = dict(zip(TRACE_COLUMNS, row))
        records.append(OuterIterationRecord(**{c: _parse(c, vals[c]) for c in RECORD_COLUMNS}))
        meta = {
            "algorithm": vals["algorithm"],
            "replication": int(vals["replication"]),
            "seed": int(vals["seed"]),
            "config_fingerprint": vals["config_fingerprint"],
        }
    return records, meta


def read_trace(path):
    return parse_trace_csv(Path(path).read_text())


def _locf(xs, ys, grid):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.array([np.nan if v is None else v for v in ys], dtype=np.float64)
    pos = np.searchsorted(xs, grid, side="right") - 1
    out = np.full(grid.shape, np.nan)
    ok = pos >= 0
    out[ok] = ys[pos[ok]]
    return out


def _jsonable(arr):
    return [None if not math.isfinite(v) else float(v) for v in arr]


def aggregate_records(runs: list[list[OuterIterationRecord]]) -> dict:
    """Per-axis q25/median/q75 of ``loss_true`` and ``grad_norm_true``.

    Every run is carried forward piecewise-constantly onto the union of all
    runs' axis values. A run contributes nothing before its first point.
    Quantiles use numpy's default linear interpolation rule.
    """
    out = {}
    for axis, column in AXES.items():
        grid = np.unique(np.concatenate([[getattr(r, column) for r in run] for run in runs if run] or [[]]))
        grid = grid.astype(np.float64)
        series = {"x": _jsonable(grid)}
        for metric in ("loss_true", "grad_norm_true"):
            rows = [
                _locf([getattr(r, column) for r in run], [getattr(r, metric) for r in run], grid)
                for run in runs if run
            ]
            mat = np.array(rows) if rows else np.empty((0, grid.size))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                q = np.nanquantile(mat, [0.25, 0.5, 0.75], axis=0) if mat.size else np.empty((3, 0))
            series[metric] = {"q25": _jsonable(q[0]), "median": _jsonable(q[1]), "q75": _jsonable(q[2])}
        out[axis] = series
    return out


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def aggregate_dir(directory) -> dict:
    """Aggregate every ``trace_r*.csv`` in ``directory`` into ``aggregate.json``."""
    directory = Path(directory)
    paths = sorted(directory.glob("trace_r*.csv"), key=lambda p: int(p.stem.split("_r")[-1]))
    if not paths:
        raise FileNotFoundError(f"no trace_r*.csv files in {directory}")
    runs, metas = [], []
    for p in paths:
        recs, meta = read_trace(p)
        runs.append(recs)
        metas.append(meta)
    algos = sorted({m.get("algorithm") for m in metas if m})
    result = {
        "algorithm": algos[0] if len(algos) == 1 else algos,
        "replications": [m.get("replication") for m in metas],
        "interpolation": "last-value-carried-forward",
        "quantile_rule": "linear",
        "series": aggregate_records(runs),
        "warnings": [],
    }
    (directory / "aggregate.json").write_text(dumps_json(result))
    return result
