"""Replay of the per-iteration inequalities and convergence-rate envelopes on a trace.

Every check produces :class:`Verdict` rows keyed by a stable check id (see
``CHECKS``). Nothing here raises on a violation; callers inspect the verdicts.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .estimator import potential_star
from .stepsize import scaled_omega

F_SLACK = 1e-12
PSI_SLACK = 1e-8
RATIO_SLACK = 1e-10

SATISFIED = "satisfied"
VIOLATED = "violated"
VACUOUS = "vacuous"
NOT_REACHED = "not_reached"
NOT_APPLICABLE = "not_applicable"

CHECKS = {
    "monotone": "f(x_{k+1}) <= f(x_k)",
    "decrease_omega": "f(x_{k+1}) <= f(x_k) - omega(M eta_k)/M^2",
    "armijo_half": "f(x_{k+1}) - f(x_k) <= g_k's_k / 2",
    "curvature_lower": "c_k g_k'd_k <= g_{k+1}'d_k (c_k = 2M eta/(1+2M eta), capped by 1-1/kappa for SA2)",
    "curvature_upper": "g_{k+1}'d_k <= 0",
    "armijo_ls": "f(x_{k+1}) <= f(x_k) + 0.1 t_k g_k'd_k",
    "wolfe_ls": "g_{k+1}'d_k >= 0.9 g_k'd_k",
    "potential_recurrence": "Psi(B_{k+1}/L) <= Psi(B_k/L) + |y|^2/(L y's) - 1 + ln(cos^2/m)",
    "y_ratio": "|y|^2/(L y's) <= 1",
    "q_hat_lower": "|g|^2/(L gap) >= 2/kappa",
    "phase_count": "#{i<k : M eta_i >= 1} <= 4 M^2 Delta",
    "phase_cos_sum": "sum of cos(theta_i) over i<k with M eta_i >= 1 <= 4 sqrt(2 kappa) M sqrt(Delta)",
    "env_linear": "gap_k/Delta <= (1 - 1/(6 kappa))^(k - K3) for k >= K4",
    "env_superlinear": "gap_k/Delta <= (D1/k)^k",
    "env_sa2_linear1": "gap_k/Delta <= (1 - exp(-Psi0/k)/(kappa min(Gamma, kappa)))^k",
    "env_sa2_linear1_tail": "gap_k/Delta <= (1 - 1/(2 kappa min(Gamma, kappa)))^k for k >= 2 Psi0",
    "env_sa2_linear2": "gap_k/Delta <= (1 - exp(-N/k)/kappa)^k",
    "env_sa2_linear2_tail": "gap_k/Delta <= (1 - 1/(2 kappa))^k for k >= 2N",
    "env_sa2_superlinear": "gap_k/Delta <= (D2/k)^k",
    "star_q_hat": "g'H*^{-1}g/gap >= 2/(1 + C_k)^2",
    "star_y_ratio": "y'H*^{-1}y/(y's) <= 1 + C_k",
}


@dataclass(frozen=True)
class Verdict:
    """Outcome of one inequality ``lhs <= rhs`` at iteration ``k``.

    ``slack`` is lhs - rhs: positive means the inequality is broken by that
    much before the tolerance is applied.
    """

    check: str
    k: int
    lhs: float
    rhs: float
    tol: float
    status: str

    @property
    def slack(self):
        return self.lhs - self.rhs


def _leq(check, k, lhs, rhs, tol, vacuous=False):
    if lhs <= rhs + tol:
        return Verdict(check, k, lhs, rhs, tol, VACUOUS if vacuous else SATISFIED)
    return Verdict(check, k, lhs, rhs, tol, VIOLATED)


def next_gradient_dot_d(rec):
    """g_{k+1}'d_k recovered from g_k'd_k and y_k's_k = t_k y_k'd_k."""
    return rec.g_dot_d + rec.y_dot_s / rec.t


def check_iteration(rec, nxt, method, M=0.0, kappa=None):
    """Decrease, Armijo and curvature inequalities for the step from ``rec`` to ``nxt``."""
    if nxt.k != rec.k + 1:
        raise ValueError(f"records {rec.k} and {nxt.k} are not consecutive")
    if not rec.has_step:
        raise ValueError(f"record {rec.k} carries no step")
    k = rec.k
    tol = F_SLACK * (1.0 + abs(rec.f))
    df = nxt.f - rec.f
    gs = rec.t * rec.g_dot_d
    gd_next = next_gradient_dot_d(rec)
    out = [_leq("monotone", k, nxt.f, rec.f, tol)]
    if method == "LsBfgs":
        out.append(_leq("armijo_ls", k, df, 0.1 * gs, tol))
        out.append(_leq("wolfe_ls", k, 0.9 * rec.g_dot_d, gd_next, tol))
        return out
    out.append(_leq("decrease_omega", k, df, -scaled_omega(M, rec.eta), tol))
    out.append(_leq("armijo_half", k, df, 0.5 * gs, tol))
    c = 2 * M * rec.eta / (1 + 2 * M * rec.eta)
    if method == "Sa2Bfgs":
        if kappa is None:
            raise ValueError("the smoothness-aided curvature bound needs kappa")
        c = min(c, 1.0 - 1.0 / kappa)
    out.append(_leq("curvature_lower", k, c * rec.g_dot_d, gd_next, tol))
    out.append(_leq("curvature_upper", k, gd_next, 0.0, tol))
    return out


def check_trace(records, method, M=0.0, kappa=None):
    out = []
    for rec, nxt in zip(records, records[1:]):
        out.extend(check_iteration(rec, nxt, method, M, kappa))
    return out


def gap_resolved(gap, f_star):
    """True when ``gap`` is well above the floating-point resolution of f."""
    return gap > F_SLACK * (1.0 + abs(f_star))


def check_potential_recurrence(records, L, kappa=None, f_star=None):
    """Potential recurrence for the BFGS update, plus the L-metric bounds on y and q.

    ``q_hat_lower`` is evaluated only where the gap is resolved, since q is a
    ratio with the gap in its denominator.
    """
    out = []
    for rec, nxt in zip(records, records[1:]):
        k = rec.k
        if math.isfinite(nxt.psi_bar):
            bound = (rec.psi_bar + rec.y_norm_sq_over_ys - 1.0
                     + math.log(rec.cos_theta_hat**2 / rec.m_hat))
            out.append(_leq("potential_recurrence", k, nxt.psi_bar, bound, PSI_SLACK))
        out.append(_leq("y_ratio", k, rec.y_norm_sq_over_ys, 1.0, RATIO_SLACK))
    if f_star is not None and kappa is not None:
        for rec in records:
            gap = rec.f - f_star
            if not gap_resolved(gap, f_star):
                continue
            q = rec.grad_norm**2 / (L * gap)
            # relative uncertainty of the gap carries over to q
            tol = RATIO_SLACK + q * F_SLACK * (1.0 + abs(f_star)) / gap
            out.append(_leq("q_hat_lower", rec.k, -q, -2.0 / kappa, tol))
    return out


@dataclass(frozen=True)
class RateConstants:
    kappa: float
    M: float
    Delta: float
    K1: float
    K2: float
    K3: float
    K4: float
    Gamma: float
    psi_bar0: float
    psi_tilde0: float | None = None
    M_tilde: float | None = None
    D1: float | None = None
    D2: float | None = None

    @property
    def gamma_kappa(self):
        return min(self.Gamma, self.kappa)

    @property
    def sa2_phase2_numerator(self):
        gk = self.gamma_kappa
        return ((self.psi_bar0 + 1) * (2 * math.log(gk) + 1)
                + self.kappa * gk * (math.log(self.Gamma) ** 2 + 24))


def rate_constants(kappa, M, Delta, psi_bar0, psi_tilde0=None, M_tilde=None):
    """All constants of the linear and superlinear envelopes by direct formula."""
    if Delta < 0:
        raise ValueError("Delta must be nonnegative")
    K1 = 4 * M * M * Delta
    K2 = 4 * math.sqrt(2 * kappa) * M * math.sqrt(Delta)
    lk = math.log(kappa)
    head = min((2 * lk + 1) * K1, 2 * math.sqrt(kappa) * K2)
    K3 = head / min(2 * lk + 1, 2.0)
    K4 = 2 * psi_bar0 + head
    Gamma = (1 + math.sqrt(2) * M * math.sqrt(Delta)) ** 2
    D1 = D2 = None
    if psi_tilde0 is not None and M_tilde is not None:
        scale = 8 * math.sqrt(2) * M_tilde * math.sqrt(Delta)
        inner = min((2 * lk + 1) * M * M * Delta, 2 * math.sqrt(2) * kappa * M * math.sqrt(Delta))
        D1 = psi_tilde0 + scale * (2 * psi_bar0 + 4 * inner + 13 * kappa)
        D2 = psi_tilde0 + scale * (2 * psi_bar0 + 1 + 4 * kappa * min(Gamma, kappa))
    return RateConstants(kappa, M, Delta, K1, K2, K3, K4, Gamma, psi_bar0,
                         psi_tilde0, M_tilde, D1, D2)


def _power(base, k):
    # base^k for base in [0, 1], robust to underflow
    if base <= 0:
        return 0.0
    return math.exp(k * math.log(base))


def envelopes(rc, method):
    """Map check id -> (first k, envelope(k)) for the envelopes valid for ``method``."""
    kap = rc.kappa
    env = {"env_linear": (math.ceil(rc.K4), lambda k: _power(1 - 1 / (6 * kap), k - rc.K3))}
    if rc.D1 is not None:
        env["env_superlinear"] = (1, lambda k: _power(rc.D1 / k, k) if rc.D1 < k else rc.D1 / k)
    if method == "Sa2Bfgs":
        gk = rc.gamma_kappa
        N = rc.sa2_phase2_numerator
        env["env_sa2_linear1"] = (1, lambda k: _power(1 - math.exp(-rc.psi_bar0 / k) / (kap * gk), k))
        env["env_sa2_linear1_tail"] = (math.ceil(2 * rc.psi_bar0),
                                       lambda k: _power(1 - 1 / (2 * kap * gk), k))
        env["env_sa2_linear2"] = (1, lambda k: _power(1 - math.exp(-N / k) / kap, k))
        env["env_sa2_linear2_tail"] = (math.ceil(2 * N), lambda k: _power(1 - 1 / (2 * kap), k))
        if rc.D2 is not None:
            env["env_sa2_superlinear"] = (1, lambda k: _power(rc.D2 / k, k) if rc.D2 < k else rc.D2 / k)
    return env


def check_envelopes(records, rc, method, f_star):
    """gap_k <= envelope(k) * Delta at every recorded k past each threshold.

    Returns (verdicts, unreached) where ``unreached`` lists envelope ids whose
    threshold lies beyond the trace.
    """
    out, unreached = [], []
    last_k = records[-1].k
    for check, (start, bound) in envelopes(rc, method).items():
        start = max(start, 0)
        if start > last_k:
            unreached.append(check)
            continue
        for rec in records:
            if rec.k < start:
                continue
            b = bound(rec.k)
            out.append(_leq(check, rec.k, rec.f - f_star, b * rc.Delta,
                            F_SLACK * (1 + abs(rec.f)), vacuous=b >= 1))
    return out, unreached


@dataclass
class PhaseReport:
    """Per-iteration membership in the small-step index set and the prefix bounds."""

    in_I_inf: list
    bar_counts: list
    cos_sums: list
    verdicts: list = field(default_factory=list)

    @property
    def counts(self):
        return [k - b for k, b in enumerate(self.bar_counts)]


def classify_phases(records, M, rc):
    """Flag M eta_k < 1 and check both prefix bounds for every k >= 1."""
    steps = [r for r in records if r.has_step]
    flags = [bool(M * r.eta < 1.0) for r in steps]
    bar_counts, cos_sums = [0], [0.0]
    for r, small in zip(steps, flags):
        bar_counts.append(bar_counts[-1] + (not small))
        cos_sums.append(cos_sums[-1] + (0.0 if small else r.cos_theta_hat))
    report = PhaseReport(flags, bar_counts, cos_sums)
    for k in range(1, len(bar_counts)):
        report.verdicts.append(_leq("phase_count", k, bar_counts[k], rc.K1, RATIO_SLACK * max(1, rc.K1)))
        report.verdicts.append(_leq("phase_cos_sum", k, cos_sums[k], rc.K2, RATIO_SLACK * max(1, rc.K2)))
    return report


@dataclass
class StarMetrics:
    """Weighted quantities with the Hessian at the minimizer as metric, one entry per step."""

    k: np.ndarray
    gap: np.ndarray
    cos_theta: np.ndarray
    m_hat: np.ndarray
    q_hat: np.ndarray
    y_ratio: np.ndarray
    C: np.ndarray
    psi_tilde0: float | None = None
    verdicts: list = field(default_factory=list)
    skipped: int = 0


def star_verdicts(sm, f_star):
    """Bounds on q and the y-ratio in the H* metric, skipping unresolved gaps."""
    sm.verdicts, sm.skipped = [], 0
    for i, k in enumerate(sm.k):
        gap, C, q = sm.gap[i], sm.C[i], sm.q_hat[i]
        # C_k needs the gap itself, so unresolved gaps are skipped
        if not gap_resolved(gap, f_star):
            sm.skipped += 1
            continue
        sm.verdicts.append(_leq("star_y_ratio", int(k), sm.y_ratio[i], 1 + C, RATIO_SLACK * (1 + C)))
        tol = RATIO_SLACK + q * F_SLACK * (1 + abs(f_star)) / gap
        sm.verdicts.append(_leq("star_q_hat", int(k), -q, -2 / (1 + C) ** 2, tol))
    return sm.verdicts


def star_metrics(records, vectors, hessian_star, f_star, M_tilde, B0=None):
    """Recompute cos, m, q and the y-ratio in the metric P = H*, the Hessian at x*.

    ``vectors`` holds arrays ``g``, ``s`` and ``y`` with one row per step.
    """
    H = np.asarray(hessian_star, dtype=float)
    if H.shape[0] > 2000:
        raise ValueError("star metrics need a dense factorization; n > 2000 is not supported")
    chol = scipy.linalg.cho_factor(H, lower=True)
    C_low = np.tril(chol[0])
    g, s, y = vectors["g"], vectors["s"], vectors["y"]
    # |P^{-1/2} v|^2 = v'P^{-1}v and |P^{1/2} s|^2 = s'Ps
    ginv = np.einsum("ij,ij->i", g, scipy.linalg.cho_solve(chol, g.T).T)
    yinv = np.einsum("ij,ij->i", y, scipy.linalg.cho_solve(chol, y.T).T)
    sP = np.einsum("ij,ij->i", s @ C_low, s @ C_low)
    gs = np.einsum("ij,ij->i", g, s)
    ys = np.einsum("ij,ij->i", y, s)
    steps = [r for r in records if r.has_step][: len(g)]
    ks = np.array([r.k for r in steps], dtype=int)
    gaps = np.array([r.f - f_star for r in steps])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(gaps > 0, ginv / gaps, np.nan)
    C = 2 * math.sqrt(2) * M_tilde * np.sqrt(np.maximum(gaps, 0.0))
    psi0 = None
    if B0 is not None:
        B0 = B0 * np.eye(H.shape[0]) if np.isscalar(B0) else np.asarray(B0, dtype=float)
        psi0 = potential_star(B0, H)
    sm = StarMetrics(ks, gaps, -gs / np.sqrt(ginv * sP), ys / sP, q, yinv / ys, C, psi0)
    star_verdicts(sm, f_star)
    return sm


@dataclass
class CheckSummary:
    check: str
    status: str
    checked: int = 0
    violations: list = field(default_factory=list)
    vacuous: int = 0
    worst_slack: float = -math.inf
    enforced: bool = True

    def as_dict(self):
        return {"check": self.check, "description": CHECKS.get(self.check, ""),
                "status": self.status, "checked": self.checked,
                "violations": self.violations[:20], "violation_count": len(self.violations),
                "vacuous": self.vacuous, "worst_slack": self.worst_slack,
                "enforced": self.enforced}


def summarize(verdicts, unreached=(), not_applicable=(), unenforced=()):
    """Fold verdicts into one summary per check id."""
    by_id = {}
    for v in verdicts:
        s = by_id.setdefault(v.check, CheckSummary(v.check, SATISFIED))
        s.checked += 1
        s.worst_slack = max(s.worst_slack, v.slack)
        if v.status == VIOLATED:
            s.violations.append(v.k)
        elif v.status == VACUOUS:
            s.vacuous += 1
    for s in by_id.values():
        if s.violations:
            s.status = VIOLATED
        elif s.vacuous == s.checked:
            s.status = VACUOUS
    for check in unreached:
        by_id.setdefault(check, CheckSummary(check, NOT_REACHED))
    for check in not_applicable:
        by_id.setdefault(check, CheckSummary(check, NOT_APPLICABLE))
    for check in unenforced:
        if check in by_id:
            by_id[check].enforced = False
    return by_id


@dataclass
class RunAnalysis:
    summaries: dict
    constants: RateConstants | None
    phases: PhaseReport | None
    certified: bool

    @property
    def failed(self):
        return any(s.status == VIOLATED and s.enforced for s in self.summaries.values())

    def first_violation(self):
        hits = [(min(s.violations), s.check) for s in self.summaries.values()
                if s.status == VIOLATED and s.enforced]
        return min(hits) if hits else None


def constants_certified(method, M, L, objective_constants, rtol=1e-12):
    """True when the run's M (and L for SA2) are at least the objective's own."""
    c = objective_constants
    ok = M >= c.M * (1 - rtol)
    if method == "Sa2Bfgs":
        ok = ok and L is not None and L >= c.L * (1 - rtol)
    return ok


def analyze_run(records, method, M, L, objective_constants, f_star=None, star=None):
    """Run every applicable check on one trace.

    ``objective_constants`` supplies mu and L for the P = L*I metric. Checks
    that rest on the run's M (decrease, curvature, phases, envelopes) only
    count as failures when the run's constants are certified, i.e. at least
    as large as the objective's. ``star`` is an optional :class:`StarMetrics`.
    """
    c = objective_constants
    kappa = c.kappa
    certified = method != "LsBfgs" and constants_certified(method, M, L, c)
    kappa_run = (L / c.mu) if (method == "Sa2Bfgs" and L is not None) else kappa
    verdicts = check_trace(records, method, M, kappa_run)
    verdicts += check_potential_recurrence(records, c.L, kappa, f_star)
    unenforced = set()
    if method != "LsBfgs" and not certified:
        unenforced |= {"monotone", "decrease_omega", "armijo_half", "curvature_lower", "curvature_upper"}
    rc = phases = None
    unreached, not_applicable = [], []
    if f_star is not None and method != "LsBfgs":
        Delta = records[0].f - f_star
        psi_t = star.psi_tilde0 if star is not None else None
        rc = rate_constants(kappa, M, max(Delta, 0.0), records[0].psi_bar, psi_t, c.M_tilde)
        phases = classify_phases(records, M, rc)
        verdicts += phases.verdicts
        env, unreached = check_envelopes(records, rc, method, f_star)
        verdicts += env
        if not certified:
            unenforced |= {"phase_count", "phase_cos_sum"} | set(envelopes(rc, method))
    elif method == "LsBfgs":
        not_applicable = ["phase_count", "phase_cos_sum", "env_linear"]
    if star is not None:
        verdicts += star.verdicts
    summaries = summarize(verdicts, unreached, not_applicable, unenforced)
    return RunAnalysis(summaries, rc, phases, certified)
