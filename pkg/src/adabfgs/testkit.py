"""Independent oracles for the test suite.

Nothing here calls the code it is used to check: derivatives come from
central differences, step sizes from a grid scan plus golden-section search
on separately written upper models, inverses from an LU solve and the
potential from eigenvalues.
"""

import math
from dataclasses import dataclass

import numpy as np

SC_MODEL = "self_concordant"
SA2_MODEL = "smoothness_aided"

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OracleConfig:
    h: float = 1e-6
    resolution: int = 4096
    golden_steps: int = 60
    seed: int = 0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.resolution < 16:
            raise ValueError("resolution must be at least 16")


DEFAULT = OracleConfig()


def fd_gradient(obj, x, config=DEFAULT):
    """Central-difference gradient with per-coordinate step h*max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = config.h * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (obj.value(x + e) - obj.value(x - e)) / (2.0 * h)
    return g


def fd_hvp(obj, x, v, config=DEFAULT):
    """Central difference of the gradient along v."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        return np.zeros_like(x)
    h = config.h * max(1.0, np.linalg.norm(x)) / nv
    return (obj.gradient(x + h * v) - obj.gradient(x - h * v)) / (2.0 * h)


def _log1m_plus(z):
    # -z - ln(1 - z), summed as a series for small z to avoid cancellation
    if z < 1e-2:
        return sum(z**j / j for j in range(2, 12))
    return -z - math.log(1.0 - z)


def sc_model(g_dot_d, w, M, t):
    """t g'd + omega_star(M t w)/M^2 (quadratic model t^2 w^2/2 when M = 0)."""
    r = t * w
    if M == 0.0:
        return t * g_dot_d + 0.5 * r * r
    if M * r >= 1.0:
        return math.inf
    return t * g_dot_d + _log1m_plus(M * r) / (M * M)


def sc_model_slope(g_dot_d, w, M, t):
    return g_dot_d + t * w * w / (1.0 - M * t * w)


def sa2_model(g_dot_d, w, d_norm, M, L, t):
    """Self-concordant model up to t_u, then its tangent plus an L-smooth quadratic."""
    alpha = min(1.0, w / (math.sqrt(L) * d_norm))
    if M == 0.0:
        return sc_model(g_dot_d, w, M, t)
    t_u = (1.0 - alpha) / (M * w)
    if t <= t_u:
        return sc_model(g_dot_d, w, M, t)
    h = t - t_u
    return (sc_model(g_dot_d, w, M, t_u) + sc_model_slope(g_dot_d, w, M, t_u) * h
            + 0.5 * L * d_norm * d_norm * h * h)


def _search_limit(g_dot_d, w, d_norm, M, L, model):
    eta = -g_dot_d / w
    T = 10.0 * eta / w
    if model == SC_MODEL:
        if M > 0:
            T = min(T, (1.0 - 1e-9) / (M * w))
        return T
    if M == 0.0:
        return T
    alpha = min(1.0, w / (math.sqrt(L) * d_norm))
    t_u = (1.0 - alpha) / (M * w)
    slope = sc_model_slope(g_dot_d, w, M, t_u)
    # beyond t_u the model is a convex quadratic with this slope at t_u
    return 10.0 * (t_u + max(0.0, -slope) / (L * d_norm * d_norm)) + T


def _unimodal(vals):
    i = int(np.argmin(vals))
    left = np.diff(vals[: i + 1])
    right = np.diff(vals[i:])
    tol = 1e-12 * (1.0 + np.max(np.abs(vals[np.isfinite(vals)])))
    return i, bool(np.all(left <= tol) and np.all(right >= -tol))


def grid_argmin_step(ctx, model=SC_MODEL, config=DEFAULT):
    """Minimize an upper model over t by grid scan plus golden-section refinement.

    ``ctx`` needs ``g_dot_d``, ``d_norm``, ``d_weighted_norm``, ``M`` and,
    for the smoothness-aided model, ``L``.
    """
    gd, dn, w, M = ctx.g_dot_d, ctx.d_norm, ctx.d_weighted_norm, ctx.M
    L = getattr(ctx, "L", None)
    if model == SC_MODEL:
        def fn(t):
            return sc_model(gd, w, M, t)
    elif model == SA2_MODEL:
        if L is None:
            raise ValueError("the smoothness-aided model needs L")

        def fn(t):
            return sa2_model(gd, w, dn, M, L, t)
    else:
        raise ValueError(f"unknown model {model!r}")

    T = _search_limit(gd, w, dn, M, L, model)
    res = config.resolution
    for attempt in range(2):
        ts = np.linspace(0.0, T, res + 1)
        vals = np.array([fn(t) for t in ts])
        i, ok = _unimodal(vals)
        if ok and (i < res or (model == SC_MODEL and M > 0)):
            break
        if attempt == 1:
            raise RuntimeError("model samples are not unimodal on the search interval")
        if i == res and not (model == SC_MODEL and M > 0):
            T *= 4.0
        res *= 4
    a, b = ts[max(i - 1, 0)], ts[min(i + 1, res)]
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(config.golden_steps):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def model_slope_fd(ctx, t, model=SC_MODEL, rel_h=1e-4):
    """Five-point central-difference derivative of the chosen model at t."""
    gd, dn, w, M = ctx.g_dot_d, ctx.d_norm, ctx.d_weighted_norm, ctx.M
    if model == SC_MODEL:
        def fn(s):
            return sc_model(gd, w, M, s)
    else:
        def fn(s):
            return sa2_model(gd, w, dn, M, ctx.L, s)
    h = rel_h * t
    return (8.0 * (fn(t + h) - fn(t - h)) - (fn(t + 2 * h) - fn(t - 2 * h))) / (12.0 * h)


def _require_spd(B):
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(B, B.T, rtol=1e-10, atol=1e-12 * np.max(np.abs(B))):
        raise ValueError("matrix is not symmetric")
    lam = np.linalg.eigvalsh(B)
    if lam[0] <= 0:
        raise ValueError("matrix is not positive definite")
    return B, lam


def dense_inverse(B):
    """Explicit inverse of an SPD matrix by LU solve against the identity."""
    B, _ = _require_spd(B)
    if B.shape[0] > 50:
        raise ValueError("dense_inverse is meant for n <= 50")
    return np.linalg.solve(B, np.eye(B.shape[0]))


def eigen_potential(B, c=1.0):
    """sum(lambda/c - ln(lambda/c) - 1) over the eigenvalues of B."""
    _, lam = _require_spd(B)
    r = lam / c
    return float(np.sum(r - np.log(r) - 1.0))


def random_spd(n, cond, rng):
    """SPD matrix with eigenvalues spread log-uniformly in [1, cond]."""
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = np.geomspace(1.0, cond, n) if n > 1 else np.array([1.0])
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class RandomContext:
    """Plain step data for the oracles; mirrors the fields of a StepContext."""

    g_dot_d: float
    d_norm: float
    d_weighted_norm: float
    M: float
    L: float


def random_context(rng, M_range=(0.0, 2.0), eta_range=(0.01, 5.0), alpha_range=(1e-3, 1.0)):
    """Draw (M, eta, alpha) and return data realizing them."""
    M = rng.uniform(*M_range)
    eta = rng.uniform(*eta_range)
    alpha = rng.uniform(*alpha_range)
    w = math.exp(rng.uniform(-1.0, 1.0))
    d_norm = math.exp(rng.uniform(-1.0, 1.0))
    L = (w / (alpha * d_norm)) ** 2
    return RandomContext(-eta * w, d_norm, w, M, L)
