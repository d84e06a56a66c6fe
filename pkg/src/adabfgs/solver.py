"""Main BFGS loop for the adaptive, smoothness-aided and line-search variants."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CurvatureBreakdown, ReferenceNotReached, SolverError
from .estimator import HessianEstimate
from .objective import CountingObjective
from .stepsize import StepContext, adaptive_step, armijo_wolfe_search, sa2_step

METHODS = ("ABfgs", "Sa2Bfgs", "LsBfgs")
ADAPTIVE_METHODS = ("ABfgs", "Sa2Bfgs")


@dataclass
class RunConfig:
    """Everything needed to reproduce one solver run.

    ``B0`` is either a positive scalar c (meaning c*I) or an explicit SPD
    matrix. ``metric_scale`` is the L used for the weighted diagnostics
    (P = L*I); it defaults to the objective's L.
    """

    method: str
    x0: np.ndarray
    B0: object = 1.0
    M: float = 0.0
    L: float | None = None
    max_iters: int = 2000
    grad_tol: float = 1e-10
    gap_tol: float | None = None
    f_star: float | None = None
    record_star_metrics: bool = False
    metric_scale: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if self.method == "Sa2Bfgs" and not (self.L is not None and self.L > 0):
            raise ValueError("Sa2Bfgs needs a positive L")
        self.x0 = np.asarray(self.x0, dtype=float)


@dataclass
class IterationRecord:
    """State at x_k together with the step taken from it.

    Step fields stay NaN on the final record, where no step is taken.
    """

    k: int
    f: float
    gap: float
    grad_norm: float
    psi_bar: float
    evaluations: int
    t: float = math.nan
    eta: float = math.nan
    alpha: float = math.nan
    branch: str = ""
    cos_theta_hat: float = math.nan
    m_hat: float = math.nan
    q_hat: float = math.nan
    y_dot_s: float = math.nan
    y_norm_sq_over_ys: float = math.nan
    g_dot_d: float = math.nan
    d_norm: float = math.nan
    d_weighted_norm: float = math.nan
    s_norm: float = math.nan
    in_I_inf: bool | None = None

    @property
    def has_step(self):
        return not math.isnan(self.t)


@dataclass
class RunResult:
    records: list
    termination: str
    x_final: np.ndarray
    config: RunConfig
    counts: dict
    metric_scale: float
    message: str = ""
    vectors: dict | None = field(default=None, repr=False)

    @property
    def iterations_used(self):
        return len(self.records) - 1

    @property
    def f_values(self):
        return np.array([r.f for r in self.records])


def _initial_estimate(B0, n):
    if np.isscalar(B0):
        return HessianEstimate.scaled_identity(n, float(B0))
    B0 = np.asarray(B0, dtype=float)
    if B0.shape != (n, n):
        raise ValueError(f"B0 must be {n}x{n}")
    return HessianEstimate(B0)


def _metric_scale(obj, cfg):
    if cfg.metric_scale is not None:
        return cfg.metric_scale
    constants = getattr(obj, "constants", None)
    if constants is not None:
        return constants.L
    if cfg.L is not None:
        return cfg.L
    raise ValueError("no L available for the weighted diagnostics")


def run(obj, cfg):
    """Run one BFGS variant from ``cfg.x0`` and return the full trace.

    Solver failures are raised as :class:`SolverError` subclasses whose
    ``result`` attribute carries the trace up to the failure.
    """
    if cfg.x0.shape != (obj.n,):
        raise ValueError(f"x0 has length {cfg.x0.size}, objective has dimension {obj.n}")
    counter = CountingObjective(obj)
    scale = _metric_scale(obj, cfg)
    est = _initial_estimate(cfg.B0, obj.n)
    line_search = cfg.method == "LsBfgs"

    x = cfg.x0.copy()
    g = counter.gradient(x)
    f = counter.value(x) if line_search else counter.trace_value(x)
    records = []
    vectors = {"g": [], "s": [], "y": []} if cfg.record_star_metrics else None

    def gap_of(fx):
        return fx - cfg.f_star if cfg.f_star is not None else math.nan

    def result(termination, message=""):
        vec = None
        if vectors is not None:
            vec = {key: np.array(val).reshape(-1, obj.n) for key, val in vectors.items()}
        return RunResult(records, termination, x.copy(), cfg, dict(counter.counts), scale,
                         message, vec)

    def converged(rec):
        if rec.grad_norm <= cfg.grad_tol:
            return "GradTol"
        if cfg.gap_tol is not None and rec.gap <= cfg.gap_tol:
            return "GapTol"
        return None

    k = 0
    try:
        while True:
            gn = float(np.linalg.norm(g))
            gap = gap_of(f)
            rec = IterationRecord(k, f, gap, gn, est.potential(scale), counter.evaluations)
            if gap > 0:
                rec.q_hat = gn * gn / (scale * gap)
            records.append(rec)
            stop = converged(rec)
            if stop is None and k >= cfg.max_iters:
                stop = "MaxIters"
            if stop is not None:
                return result(stop)

            d = est.direction(g)
            gd = float(g @ d)
            if not gd < 0:
                raise CurvatureBreakdown(f"search direction is not a descent direction (g'd = {gd!r})")
            d_norm = float(np.linalg.norm(d))

            if line_search:
                cache = {}

                def phi(t):
                    xt = x + t * d
                    cache[t] = (xt, counter.value(xt), None)
                    return cache[t][1]

                def dphi(t):
                    xt, ft, _ = cache[t]
                    gt = counter.gradient(xt)
                    cache[t] = (xt, ft, gt)
                    return float(gt @ d)

                dec = armijo_wolfe_search(phi, dphi, f, gd)
                x_new, f_new, g_new = cache[dec.t]
                s = x_new - x
            else:
                hd = counter.hvp(x, d)
                w2 = float(d @ hd)
                if not (w2 > 0 and math.isfinite(w2)):
                    raise FloatingPointError(f"nonpositive Hessian quadratic form {w2!r}")
                w = math.sqrt(w2)
                rec.d_weighted_norm = w
                ctx = StepContext(gd, d_norm, w, cfg.M, cfg.L)
                dec = sa2_step(ctx) if cfg.method == "Sa2Bfgs" else adaptive_step(ctx)
                s = dec.t * d
                x_new = x + s
                g_new = counter.gradient(x_new)
                f_new = counter.trace_value(x_new)
                rec.eta = dec.eta
                rec.in_I_inf = bool(cfg.M * dec.eta < 1.0)
                if dec.alpha is not None:
                    rec.alpha = dec.alpha

            y = g_new - g
            ys = float(y @ s)
            s_norm = float(np.linalg.norm(s))
            rec.t = dec.t
            rec.branch = dec.branch
            rec.g_dot_d = gd
            rec.d_norm = d_norm
            rec.s_norm = s_norm
            rec.y_dot_s = ys
            rec.cos_theta_hat = -float(g @ s) / (gn * s_norm)
            rec.m_hat = ys / (scale * s_norm * s_norm)
            rec.y_norm_sq_over_ys = float(y @ y) / (scale * ys) if ys > 0 else math.inf
            if vectors is not None:
                vectors["g"].append(g.copy())
                vectors["s"].append(s)
                vectors["y"].append(y)

            try:
                est.update(s, y)
            except CurvatureBreakdown:
                # A breakdown at an already converged point is harmless: stop there.
                gn_new = float(np.linalg.norm(g_new))
                done = IterationRecord(k + 1, f_new, gap_of(f_new), gn_new, math.nan,
                                       counter.evaluations)
                if converged(done) is None:
                    raise
                x, g, f = x_new, g_new, f_new
                records.append(done)
                return result(converged(done), "final update skipped after convergence")
            x, g, f = x_new, g_new, f_new
            k += 1
    except (SolverError, FloatingPointError) as err:
        if not isinstance(err, SolverError):
            err = CurvatureBreakdown(str(err))
        err.result = result(err.termination, str(err))
        raise err


def solve_reference(obj, x0=None, max_iters=100000, B0=None):
    """High-accuracy minimizer used as f* for gap reporting.

    Runs the smoothness-aided method with the objective's own constants, and
    the plain adaptive method if that fails.
    """
    c = obj.constants
    x0 = np.zeros(obj.n) if x0 is None else np.asarray(x0, dtype=float)
    g0 = obj.gradient(x0)
    tol = 1e-13 * (1.0 + float(np.linalg.norm(g0)))
    B0 = c.L if B0 is None else B0
    best = None
    for method in ("Sa2Bfgs", "ABfgs"):
        cfg = RunConfig(method=method, x0=x0, B0=B0, M=c.M, L=c.L,
                        max_iters=max_iters, grad_tol=tol)
        try:
            res = run(obj, cfg)
        except SolverError as err:
            res = err.result
        last = res.records[-1]
        if last.grad_norm <= tol:
            return res.x_final, last.f
        if best is None or last.f < best[1]:
            best = (res.x_final, last.f, res)
    raise ReferenceNotReached(
        f"reference solve stopped at gradient norm {best[2].records[-1].grad_norm:.3e} > {tol:.3e}",
        best[0], best[1], best[2])
