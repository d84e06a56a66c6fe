"""Experiment matrices: configuration, execution, checking and plot data."""

import configparser
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data
from .diagnostics import analyze_run, star_metrics
from .errors import SolverError
from .objective import QuadraticObjective, SmoothnessConstants
from .solver import METHODS, RunConfig, run, solve_reference
from .traces import list_runs, read_meta, read_records, read_star, write_trace

DENSE_LIMIT = 4000
STAR_LIMIT = 2000
B0_CHOICES = ("mu_identity", "L_identity")
GAP_TARGETS = (1e-6, 1e-8, 1e-9)


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSpec:
    name: str
    kind: str
    options: dict


@dataclass
class Experiment:
    """A parsed configuration: datasets crossed with methods, B0 choices and the M/L grids."""

    datasets: list
    methods: list = field(default_factory=lambda: list(METHODS))
    b0: list = field(default_factory=lambda: list(B0_CHOICES))
    m_grid: list = field(default_factory=lambda: [0, 1, 2, 3])
    l_grid: list = field(default_factory=lambda: [0, 1, 2, 3])
    max_iters: int = 2000
    grad_tol: float = 1e-10
    gap_tol: float | None = None
    x0: str = "ones"
    record_star_metrics: bool = True
    cache_dir: str | None = None


def _int_list(text):
    return [int(v) for v in text.replace(",", " ").split()]


def _name_list(text):
    return [v.strip() for v in text.replace(",", " ").split() if v.strip()]


def load_config(path):
    """Parse an INI-style experiment file (see README for the keys)."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        if not parser.read(path):
            raise ConfigError(f"cannot read config {path}")
    except configparser.Error as err:
        raise ConfigError(str(err)) from None
    datasets = []
    for section in parser.sections():
        if section.startswith("dataset."):
            opts = dict(parser[section])
            kind = opts.pop("kind", "libsvm")
            if kind == "libsvm" and "path" in opts:
                opts["path"] = _resolve_path(opts["path"], path.parent)
            datasets.append(DatasetSpec(section.split(".", 1)[1], kind, opts))
        elif section != "run":
            raise ConfigError(f"unknown section [{section}]")
    if not datasets:
        raise ConfigError("config defines no [dataset.NAME] section")
    exp = Experiment(datasets)
    if parser.has_section("run"):
        r = parser["run"]
        try:
            exp.methods = _name_list(r.get("methods", " ".join(exp.methods)))
            exp.b0 = _name_list(r.get("b0", " ".join(exp.b0)))
            exp.m_grid = _int_list(r.get("m_grid", "0 1 2 3"))
            exp.l_grid = _int_list(r.get("l_grid", "0 1 2 3"))
            exp.max_iters = r.getint("max_iters", exp.max_iters)
            exp.grad_tol = r.getfloat("grad_tol", exp.grad_tol)
            # empty optional values mean "unset"
            exp.gap_tol = float(r["gap_tol"]) if r.get("gap_tol") else None
            exp.x0 = r.get("x0", exp.x0)
            exp.record_star_metrics = r.getboolean("record_star_metrics", exp.record_star_metrics)
            exp.cache_dir = r.get("cache_dir") or None
        except ValueError as err:
            raise ConfigError(f"[run]: {err}") from None
    bad = [m for m in exp.methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
    bad = [b for b in exp.b0 if b not in B0_CHOICES]
    if bad:
        raise ConfigError(f"unknown b0 choices {bad}; choose from {list(B0_CHOICES)}")
    if not (exp.methods and exp.b0 and exp.m_grid and exp.l_grid):
        raise ConfigError("every axis of the experiment matrix must be nonempty")
    if exp.x0 not in ("ones", "zeros"):
        raise ConfigError("x0 must be 'ones' or 'zeros'")
    return exp


def _resolve_path(value, base):
    p = Path(value).expanduser()
    if p.is_absolute():
        return str(p)
    if (base / p).exists():
        return str(base / p)
    found = data.find_dataset(value)
    return str(found) if found else str(base / p)


@dataclass
class Problem:
    """A dataset turned into an objective, with its reference solution."""

    name: str
    objective: object
    key: str
    stats: dict
    x_star: np.ndarray | None = None
    f_star: float | None = None
    hessian_star: np.ndarray | None = None


def build_problem(spec):
    o = spec.options
    try:
        if spec.kind == "quadratic":
            n = int(o.get("n", 5))
            rng = np.random.default_rng(int(o.get("seed", 0)))
            Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
            eig = np.linspace(1.0, float(o.get("cond", 10.0)), n)
            A = (Q * eig) @ Q.T
            A = 0.5 * (A + A.T)
            b = rng.normal(size=n)
            obj = QuadraticObjective(A, b)
            key = data.array_hash(A, b, params={"kind": "quadratic"})
            c = obj.constants
            return Problem(spec.name, obj, key, {"n": n, "mu": c.mu, "L": c.L, "M": c.M,
                                                  "kappa": c.kappa})
        if spec.kind == "libsvm":
            if "path" not in o:
                raise ConfigError(f"dataset {spec.name}: libsvm needs a path")
            if not Path(o["path"]).is_file():
                raise ConfigError(f"dataset {spec.name}: file {o['path']} not found "
                                  f"(set {data.DATA_ENV} or give an absolute path)")
            ds = data.load_libsvm(o["path"], n=int(o["n"]) if "n" in o else None)
        elif spec.kind == "onehot":
            ds = data.make_onehot_dataset(m=int(o.get("m", 8124)), seed=int(o.get("seed", 0)),
                                          name=spec.name)
        elif spec.kind == "sparse-binary":
            ds = data.make_sparse_binary_dataset(
                m=int(o.get("m", 49749)), n=int(o.get("n", 300)),
                mean_nnz=float(o.get("mean_nnz", 11.7)),
                positive_rate=float(o.get("positive_rate", 0.03)), seed=int(o.get("seed", 0)),
                name=spec.name)
        else:
            raise ConfigError(f"dataset {spec.name}: unknown kind {spec.kind!r}")
    except (ValueError, OSError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"dataset {spec.name}: {err}") from None
    c = data.dataset_constants(ds)
    obj = ds.objective(c)
    stats = {"n": ds.n, "m": ds.m, "row_norm_max": c.row_norm_max, "lambda_max": c.lambda_max,
             "power_converged": c.power_converged, "mu": c.mu, "L": c.L, "M": c.M,
             "kappa": c.kappa}
    return Problem(spec.name, obj, ds.content_hash({"objective": "logistic"}), stats)


def attach_reference(problem, cache=None):
    x, f, loaded = data.cached_reference(problem.name, problem.key,
                                         lambda: solve_reference(problem.objective), cache)
    problem.x_star, problem.f_star = x, f
    problem.stats["f_star"] = f
    problem.stats["refsol_cached"] = loaded
    return problem


def expand(exp, problem):
    """All run specifications for one problem."""
    c = problem.objective.constants
    jobs = []
    for b0 in exp.b0:
        scale = c.mu if b0 == "mu_identity" else c.L
        for method in exp.methods:
            if method == "LsBfgs":
                grid = [(None, None)]
            elif method == "ABfgs":
                grid = [(i, None) for i in exp.m_grid]
            else:
                grid = [(i, j) for i in exp.m_grid for j in exp.l_grid]
            seen = set()
            for i, j in grid:
                M = 0.0 if i is None else c.M / 10**i
                L = None if j is None else c.L / 5**j
                if (M, L) in seen:
                    continue
                seen.add((M, L))
                rid = f"{problem.name}__{method}__{b0}"
                if i is not None:
                    rid += f"__m{i}"
                if j is not None:
                    rid += f"__l{j}"
                jobs.append({"run_id": rid, "dataset": problem.name, "method": method,
                             "b0": b0, "B0": scale, "M": M, "L": L, "m_index": i,
                             "l_index": j})
    return jobs


_PROBLEMS = {}


def _init_worker(problems):
    _PROBLEMS.update(problems)


def _first_k(records, target):
    for r in records:
        if r.gap <= target:
            return r.k
    return None


def execute(job, exp, out_dir, problems=None):
    """Run one matrix cell, write its trace and return its summary entry."""
    problem = (problems or _PROBLEMS)[job["dataset"]]
    obj = problem.objective
    x0 = np.ones(obj.n) if exp.x0 == "ones" else np.zeros(obj.n)
    star = exp.record_star_metrics and problem.hessian_star is not None
    cfg = RunConfig(method=job["method"], x0=x0, B0=job["B0"], M=job["M"], L=job["L"],
                    max_iters=exp.max_iters, grad_tol=exp.grad_tol, gap_tol=exp.gap_tol,
                    f_star=problem.f_star, record_star_metrics=star)
    try:
        result = run(obj, cfg)
    except SolverError as err:
        result = err.result
    sm = None
    if star and result.vectors is not None and len(result.vectors["g"]):
        sm = star_metrics(result.records, result.vectors, problem.hessian_star, problem.f_star,
                          obj.constants.M_tilde, job["B0"])
    gaps = [r.gap for r in result.records]
    evals = [r.evaluations for r in result.records]
    entry = {
        "termination": result.termination,
        "message": result.message,
        "iterations": result.iterations_used,
        "best_gap": min(gaps) if problem.f_star is not None else None,
        "final_gap": gaps[-1] if problem.f_star is not None else None,
        "evaluations": result.counts["value"] + result.counts["gradient"] + result.counts["hvp"],
        "counts": result.counts,
        "iterations_to_gap": {repr(t): _first_k(result.records, t) for t in GAP_TARGETS},
        "evaluations_to_gap": {
            repr(t): (evals[k] if (k := _first_k(result.records, t)) is not None else None)
            for t in GAP_TARGETS},
    }
    meta = {key: job[key] for key in ("dataset", "method", "b0", "B0", "M", "L", "m_index",
                                      "l_index")}
    meta.update(entry, f_star=problem.f_star, constants=problem.stats,
                metric_scale=result.metric_scale, max_iters=exp.max_iters,
                grad_tol=exp.grad_tol)
    write_trace(out_dir, job["run_id"], result, meta, sm)
    return job["run_id"], dict(entry, dataset=job["dataset"], method=job["method"],
                               b0=job["b0"], M=job["M"], L=job["L"])


def prepare(exp, allow_large=False, with_reference=True):
    """Build every problem; returns (problems, refused) where refused maps name -> reason."""
    problems, refused = {}, {}
    for spec in exp.datasets:
        p = build_problem(spec)
        if p.objective.n > DENSE_LIMIT and not allow_large:
            msg = (f"dataset {p.name} has n = {p.objective.n} > {DENSE_LIMIT}; dense n x n "
                   f"estimators are refused without --allow-large")
            warnings.warn(msg, stacklevel=2)
            refused[p.name] = msg
            continue
        if with_reference:
            attach_reference(p, exp.cache_dir)
            if exp.record_star_metrics and p.objective.n <= STAR_LIMIT:
                p.hessian_star = p.objective.full_hessian(p.x_star)
        problems[p.name] = p
    return problems, refused


def run_matrix(exp, out_dir, threads=1, allow_large=False):
    """Execute the full matrix and write ``summary.json``; returns the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problems, refused = prepare(exp, allow_large)
    jobs = [job for p in problems.values() for job in expand(exp, p)]
    runs = {}
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                                 initargs=(problems,)) as pool:
            futures = [pool.submit(execute, job, exp, out_dir) for job in jobs]
            for fut in futures:
                rid, entry = fut.result()
                runs[rid] = entry
    else:
        for job in jobs:
            rid, entry = execute(job, exp, out_dir, problems)
            runs[rid] = entry
    summary = {"datasets": {name: p.stats for name, p in problems.items()},
               "refused": refused, "runs": runs}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def check_run(trace_dir, run_id):
    meta = read_meta(Path(trace_dir) / f"{run_id}.json")
    records = read_records(trace_dir, run_id)
    f_star = meta.get("f_star")
    star = None
    if f_star is not None:
        star = read_star(trace_dir, run_id, f_star, meta.get("psi_tilde0"))
    stats = meta["constants"]
    c = SmoothnessConstants(stats["mu"], stats["L"], stats["M"])
    return meta, analyze_run(records, meta["method"], meta["M"], meta["L"], c, f_star, star)


def check_dir(trace_dir):
    """Check every run in ``trace_dir``; returns (report dict, failed run ids)."""
    runs = list_runs(trace_dir)
    if not runs:
        raise FileNotFoundError(f"no traces in {trace_dir}")
    report, failed = {}, []
    for rid in runs:
        meta, analysis = check_run(trace_dir, rid)
        entry = {"certified": analysis.certified,
                 "checks": {cid: s.as_dict() for cid, s in analysis.summaries.items()}}
        if analysis.constants is not None:
            entry["rate_constants"] = {k: v for k, v in analysis.constants.__dict__.items()}
        hit = analysis.first_violation()
        if hit is not None:
            failed.append(rid)
            entry["first_violation"] = {"k": hit[0], "check": hit[1]}
        report[rid] = entry
    return report, failed


def best_tuned(summary_runs, dataset, method, b0, target=1e-9):
    """Pick the tuned run reaching ``target`` in the fewest iterations (else lowest gap)."""
    cands = [(rid, e) for rid, e in summary_runs.items()
             if e["dataset"] == dataset and e["method"] == method and e["b0"] == b0]
    if not cands:
        return None

    def score(item):
        e = item[1]
        k = e["iterations_to_gap"].get(repr(target))
        best = e["best_gap"] if e["best_gap"] is not None else math.inf
        return (k is None, k if k is not None else 0, best)

    return min(cands, key=score)[0]


def write_report(trace_dir, out_dir):
    """Per-curve data files (x, gap) and gnuplot stubs, against iterations and evaluations."""
    trace_dir, out_dir = Path(trace_dir), Path(out_dir)
    runs = list_runs(trace_dir)
    if not runs:
        raise FileNotFoundError(f"no traces in {trace_dir}")
    metas = {rid: read_meta(trace_dir / f"{rid}.json") for rid in runs}
    summary = {rid: {"dataset": m["dataset"], "method": m["method"], "b0": m["b0"],
                     "iterations_to_gap": m["iterations_to_gap"], "best_gap": m["best_gap"]}
               for rid, m in metas.items()}
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = sorted({(m["dataset"], m["b0"]) for m in metas.values()})
    index = {}
    for dataset, b0 in cells:
        curves = []
        for method in METHODS:
            rid = best_tuned(summary, dataset, method, b0)
            if rid is None:
                continue
            meta = metas[rid]
            records = read_records(trace_dir, rid)
            absolute = meta.get("f_star") is None
            ys = [r.f if absolute else r.gap for r in records]
            # log-ready: stop at the first gap the reference cannot resolve
            keep = []
            for r, y in zip(records, ys):
                if not y > 0:
                    break
                keep.append((r, y))
            assert all(y > 0 for _, y in keep)
            label = "f" if absolute else "gap"
            for axis, xs in (("iter", [r.k for r, _ in keep]),
                             ("evals", [r.evaluations for r, _ in keep])):
                path = out_dir / f"{dataset}__{b0}__{method}.{axis}.dat"
                lines = [f"# run {rid}", f"# x = {'iteration' if axis == 'iter' else 'evaluations'}"
                         f", y = {label}" + ("  (f_star unavailable: absolute f)" if absolute else "")]
                lines += [f"{x} {y!r}" for x, (_, y) in zip(xs, keep)]
                path.write_text("\n".join(lines) + "\n")
            curves.append((method, rid, absolute))
        for axis, xlabel in (("iter", "iterations"), ("evals", "function, gradient and HVP evaluations")):
            plots = ", \\\n     ".join(
                f"'{dataset}__{b0}__{m}.{axis}.dat' using 1:2 with lines title '{m}'"
                for m, _, _ in curves)
            script = (f"# {dataset}, B0 = {b0}\nset logscale y\nset xlabel '{xlabel}'\n"
                      f"set ylabel 'f(x) - f*'\nset key top right\nplot {plots}\n")
            (out_dir / f"{dataset}__{b0}.{axis}.gp").write_text(script)
        index[f"{dataset}__{b0}"] = {m: rid for m, rid, _ in curves}
    (out_dir / "report.json").write_text(json.dumps(index, indent=2, sort_keys=True))
    return index


def refsol(exp, allow_large=False):
    problems, refused = prepare(exp, allow_large)
    return {name: {"f_star": p.f_star, "cached": p.stats["refsol_cached"], "n": p.objective.n}
            for name, p in problems.items()}, refused
