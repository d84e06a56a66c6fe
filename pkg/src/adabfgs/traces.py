"""On-disk trace format: CSV per run plus JSON metadata.

For a run id ``R`` a trace directory holds

* ``R.csv``       the convergence trace, columns ``TRACE_COLUMNS`` in that order
* ``R.aux.csv``   per-step quantities the checks need but the trace omits
* ``R.star.csv``  optional weighted metrics in the H* metric
* ``R.json``      metadata: schema version, run parameters, constants, f*, counts

Floats are written with Python's shortest round-trip repr, so reading a trace
back gives bit-identical values. Missing values are empty fields.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .diagnostics import StarMetrics, star_verdicts
from .solver import IterationRecord

SCHEMA = "adabfgs-trace/1"

TRACE_COLUMNS = ("k", "f", "gap", "grad_norm", "t", "eta", "alpha", "branch",
                 "cos_theta_hat", "m_hat", "y_dot_s", "psi_bar", "in_I_inf")
AUX_COLUMNS = ("k", "g_dot_d", "d_norm", "d_weighted_norm", "s_norm",
               "y_norm_sq_over_ys", "evaluations")
STAR_COLUMNS = ("k", "gap", "cos_theta", "m_hat", "q_hat", "y_ratio", "C")


class TraceFormatError(ValueError):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _float(s):
    return math.nan if s == "" else float(s)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_csv(path, columns):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TraceFormatError(f"{path}: empty file")
    header = tuple(rows[0])
    if header != tuple(columns):
        missing = [c for c in columns if c not in header]
        raise TraceFormatError(f"{path}: expected columns {list(columns)}"
                               + (f", missing {missing}" if missing else f", got {list(header)}"))
    return rows[1:]


def write_trace(directory, run_id, result, meta, star=None):
    """Write the trace files of ``result`` and return the metadata written."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    recs = result.records
    _write_csv(d / f"{run_id}.csv", TRACE_COLUMNS,
               [(r.k, r.f, r.gap, r.grad_norm, r.t, r.eta, r.alpha, r.branch, r.cos_theta_hat,
                 r.m_hat, r.y_dot_s, r.psi_bar, r.in_I_inf) for r in recs])
    _write_csv(d / f"{run_id}.aux.csv", AUX_COLUMNS,
               [(r.k, r.g_dot_d, r.d_norm, r.d_weighted_norm, r.s_norm, r.y_norm_sq_over_ys,
                 r.evaluations) for r in recs])
    meta = dict(meta, schema=SCHEMA, run_id=run_id)
    if star is not None:
        _write_csv(d / f"{run_id}.star.csv", STAR_COLUMNS,
                   zip(star.k, star.gap, star.cos_theta, star.m_hat, star.q_hat, star.y_ratio,
                       star.C))
        meta["psi_tilde0"] = star.psi_tilde0
        meta["star_skipped"] = star.skipped
    (d / f"{run_id}.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return meta


def read_meta(path):
    meta = json.loads(Path(path).read_text())
    if meta.get("schema") != SCHEMA:
        raise TraceFormatError(f"{path}: unsupported trace schema {meta.get('schema')!r}")
    return meta


def read_records(directory, run_id):
    d = Path(directory)
    main = _read_csv(d / f"{run_id}.csv", TRACE_COLUMNS)
    aux_path = d / f"{run_id}.aux.csv"
    aux = _read_csv(aux_path, AUX_COLUMNS) if aux_path.exists() else None
    if aux is not None and len(aux) != len(main):
        raise TraceFormatError(f"{aux_path}: row count differs from the trace")
    records = []
    for i, row in enumerate(main):
        k, f, gap, gn, t, eta, alpha, branch, cos, m_hat, ys, psi, flag = row
        rec = IterationRecord(int(k), _float(f), _float(gap), _float(gn), _float(psi),
                              evaluations=-1, t=_float(t), eta=_float(eta), alpha=_float(alpha),
                              branch=branch, cos_theta_hat=_float(cos), m_hat=_float(m_hat),
                              y_dot_s=_float(ys), in_I_inf=None if flag == "" else flag == "1")
        if aux is not None:
            a = aux[i]
            if int(a[0]) != rec.k:
                raise TraceFormatError(f"{aux_path}: row {i} has k={a[0]}, expected {rec.k}")
            rec.g_dot_d, rec.d_norm, rec.d_weighted_norm, rec.s_norm, rec.y_norm_sq_over_ys = (
                _float(v) for v in a[1:6])
            rec.evaluations = int(a[6])
        records.append(rec)
    if not records:
        raise TraceFormatError(f"{run_id}: trace has no records")
    return records


def read_star(directory, run_id, f_star, psi_tilde0=None):
    path = Path(directory) / f"{run_id}.star.csv"
    if not path.exists():
        return None
    rows = _read_csv(path, STAR_COLUMNS)
    cols = list(zip(*rows)) if rows else [()] * len(STAR_COLUMNS)
    arrays = [np.array([_float(v) for v in c]) for c in cols[1:]]
    sm = StarMetrics(np.array([int(v) for v in cols[0]], dtype=int), *arrays,
                     psi_tilde0=psi_tilde0)
    star_verdicts(sm, f_star)
    return sm


def list_runs(directory):
    d = Path(directory)
    return sorted(p.stem for p in d.glob("*.json")
                  if p.name not in ("summary.json", "check_report.json", "report.json"))
