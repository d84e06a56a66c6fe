"""Closed-form step sizes, their upper models, and the Armijo-Wolfe baseline search."""

import math
from dataclasses import dataclass

from .errors import InconsistentConstants, LineSearchFailure

SELF_CONCORDANT = "SelfConcordant"
SMOOTHNESS_AIDED = "SmoothnessAided"
LINE_SEARCH = "LineSearch"

ALPHA_CLAMP = 1e-10
_SERIES_CUTOFF = 1e-3


def omega(z):
    """z - ln(1 + z) for z >= 0."""
    if z < 0:
        raise ValueError(f"omega is defined for z >= 0, got {z}")
    if z < _SERIES_CUTOFF:
        return z * z * _omega_over_sq(z)
    return z - math.log1p(z)


def omega_star(z):
    """-z - ln(1 - z) for 0 <= z < 1."""
    if not 0 <= z < 1:
        raise ValueError(f"omega_star is defined on [0, 1), got {z}")
    if z < _SERIES_CUTOFF:
        return z * z * _omega_star_over_sq(z)
    return -z - math.log1p(-z)


def _omega_over_sq(z):
    # omega(z)/z^2, accurate as z -> 0
    if z < _SERIES_CUTOFF:
        return 0.5 - z / 3 + z * z / 4 - z**3 / 5 + z**4 / 6
    return (z - math.log1p(z)) / (z * z)


def _omega_star_over_sq(z):
    if z < _SERIES_CUTOFF:
        return 0.5 + z / 3 + z * z / 4 + z**3 / 5 + z**4 / 6
    return (-z - math.log1p(-z)) / (z * z)


def scaled_omega(M, eta):
    """omega(M eta)/M^2, with the M -> 0 limit eta^2/2."""
    return eta * eta * _omega_over_sq(M * eta)


def scaled_omega_star(M, r):
    """omega_star(M r)/M^2, with the M -> 0 limit r^2/2."""
    return r * r * _omega_star_over_sq(M * r)


def omega_inv_upper(y):
    """y + sqrt(2y), an upper bound on the inverse of omega."""
    if y < 0:
        raise ValueError(f"expected y >= 0, got {y}")
    return y + math.sqrt(2.0 * y)


@dataclass(frozen=True)
class StepContext:
    """Directional data at the current point.

    ``g_dot_d`` is g'd, ``d_norm`` the Euclidean length of d and
    ``d_weighted_norm`` its local Hessian norm.
    """

    g_dot_d: float
    d_norm: float
    d_weighted_norm: float
    M: float = 0.0
    L: float | None = None

    def __post_init__(self):
        if not self.g_dot_d < 0:
            raise ValueError(f"d is not a descent direction (g'd = {self.g_dot_d})")
        if not (self.d_norm > 0 and self.d_weighted_norm > 0):
            raise ValueError("direction norms must be positive")
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if self.L is not None and not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def eta(self):
        return -self.g_dot_d / self.d_weighted_norm


@dataclass(frozen=True)
class StepDecision:
    t: float
    eta: float
    branch: str
    predicted_decrease: float
    alpha: float | None = None
    probes: int = 0


def adaptive_step(ctx):
    """Minimizer of the self-concordant upper model along d."""
    eta = ctx.eta
    w = ctx.d_weighted_norm
    t = eta / ((1.0 + ctx.M * eta) * w)
    return StepDecision(t, eta, SELF_CONCORDANT, scaled_omega(ctx.M, eta))


def step_alpha(ctx):
    """||d||_x / (sqrt(L) ||d||), clamped to 1 within roundoff."""
    if ctx.L is None:
        raise ValueError("the smoothness-aided step needs L")
    alpha = ctx.d_weighted_norm / (math.sqrt(ctx.L) * ctx.d_norm)
    if alpha > 1.0 + ALPHA_CLAMP:
        raise InconsistentConstants(
            f"curvature along d exceeds L (alpha = {alpha!r}); L is below the true Lipschitz modulus")
    return min(alpha, 1.0)


def sa2_step(ctx):
    """Minimizer of the upper model that also uses L-smoothness."""
    alpha = step_alpha(ctx)
    eta = ctx.eta
    M, w = ctx.M, ctx.d_weighted_norm
    pred = scaled_omega(M, eta)
    if (1.0 + M * eta) * alpha <= 1.0:
        t = eta / ((1.0 + M * eta) * w)
        return StepDecision(t, eta, SELF_CONCORDANT, pred, alpha)
    t = (M * eta * alpha * alpha + (1.0 - alpha) ** 2) / (M * w)
    return StepDecision(t, eta, SMOOTHNESS_AIDED, pred, alpha)


def model_upper(ctx, t):
    """Self-concordant upper bound on f(x + t d) - f(x)."""
    r = t * ctx.d_weighted_norm
    if ctx.M * r >= 1.0 or t < 0:
        raise ValueError(f"t = {t} is outside the model's domain")
    return t * ctx.g_dot_d + scaled_omega_star(ctx.M, r)


def model_upper_sa2(ctx, t):
    """Upper model that switches to an L-smooth quadratic beyond t_u = (1 - alpha)/(M ||d||_x)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    alpha = step_alpha(ctx)
    M, w = ctx.M, ctx.d_weighted_norm
    if M == 0.0 or M * t * w <= 1.0 - alpha:
        return model_upper(ctx, t)
    t_u = (1.0 - alpha) / (M * w)
    h = t - t_u
    return (t * ctx.g_dot_d + scaled_omega_star(M, t_u * w)
            + t_u * h * w * w / alpha + 0.5 * ctx.L * h * h * ctx.d_norm**2)


def armijo_wolfe_search(phi, dphi, f0, g_dot_d, c1=0.1, c2=0.9, max_refine=50, t_max=2.0**50):
    """Log-bisection search for a step meeting the Armijo and Wolfe conditions.

    ``phi(t)`` returns f(x + t d) and ``dphi(t)`` returns grad f(x + t d)'d;
    ``dphi`` is only called once the Armijo condition holds at t.
    """
    if not g_dot_d < 0:
        raise ValueError("d is not a descent direction")
    lo, hi = 0.0, math.inf
    t = 1.0
    probes = 0
    refinements = 0
    while True:
        probes += 1
        ft = phi(t)
        if not (ft <= f0 + c1 * t * g_dot_d):
            hi = t
        else:
            if dphi(t) >= c2 * g_dot_d:
                return StepDecision(t, math.nan, LINE_SEARCH, f0 - ft, probes=probes)
            lo = t
        if hi == math.inf:
            t = 2.0 * t
            if t > t_max:
                raise LineSearchFailure(f"no Wolfe point found below t = {t_max}")
            continue
        refinements += 1
        if refinements > max_refine:
            raise LineSearchFailure(f"bracket [{lo}, {hi}] not resolved after {max_refine} refinements")
        t = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
