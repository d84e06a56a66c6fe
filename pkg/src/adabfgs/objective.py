"""Objective functions with value, gradient and Hessian-vector products."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit


@dataclass(frozen=True)
class SmoothnessConstants:
    """Strong convexity ``mu``, gradient Lipschitz ``L``, self-concordance ``M``.

    ``L2`` is the Hessian Lipschitz modulus when one is known.
    """

    mu: float
    L: float
    M: float = 0.0
    L2: float | None = None

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be positive and finite, got {self.mu}")
        if not (self.L >= self.mu and math.isfinite(self.L)):
            raise ValueError(f"L must be finite and >= mu, got L={self.L}, mu={self.mu}")
        if not (self.M >= 0 and math.isfinite(self.M)):
            raise ValueError(f"M must be finite and >= 0, got {self.M}")
        if self.L2 is not None and not self.L2 > 0:
            raise ValueError(f"L2 must be positive when given, got {self.L2}")

    @property
    def kappa(self):
        return self.L / self.mu

    @property
    def hessian_lipschitz(self):
        # Self-concordance plus L-smoothness give a 2*M*L^{3/2}-Lipschitz Hessian.
        if self.L2 is not None:
            return self.L2
        return 2.0 * self.M * self.L**1.5

    @property
    def M_tilde(self):
        return self.hessian_lipschitz / (2.0 * self.mu**1.5)


class Objective:
    """Interface shared by the concrete objectives.

    Subclasses implement ``value``, ``gradient`` and ``hvp``; ``full_hessian``
    is optional and only used by small-n diagnostics.
    """

    n: int
    constants: SmoothnessConstants

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hvp(self, x, v):
        raise NotImplementedError

    def full_hessian(self, x):
        raise NotImplementedError

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x


class QuadraticObjective(Objective):
    """f(x) = 0.5 x'Ax - b'x with A symmetric positive definite."""

    def __init__(self, A, b=None, M=0.0):
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.array_equal(A, A.T):
            raise ValueError("A must be symmetric")
        np.linalg.cholesky(A)  # raises LinAlgError when A is not SPD
        self.A = A
        self.n = A.shape[0]
        self.b = np.zeros(self.n) if b is None else np.array(b, dtype=float)
        if self.b.shape != (self.n,):
            raise ValueError("b has the wrong length")
        eig = np.linalg.eigvalsh(A)
        self.constants = SmoothnessConstants(mu=float(eig[0]), L=float(eig[-1]), M=M)

    def value(self, x):
        x = self._check(x)
        return float(0.5 * x @ (self.A @ x) - self.b @ x)

    def gradient(self, x):
        return self.A @ self._check(x) - self.b

    def hvp(self, x, v):
        self._check(x)
        return self.A @ self._check(v)

    def full_hessian(self, x):
        return self.A.copy()

    def minimizer(self):
        return np.linalg.solve(self.A, self.b)


def _as_csr(features):
    X = sp.csr_matrix(features, dtype=float)
    X.sum_duplicates()
    X.sort_indices()
    return X


@dataclass
class PowerIterationResult:
    value: float
    iterations: int
    converged: bool


def gram_lambda_max(X, tol=1e-8, max_iter=5000):
    """Largest eigenvalue of X'X by power iteration from the normalized ones vector."""
    n = X.shape[1]
    v = np.ones(n) / math.sqrt(n)
    rq = 0.0
    for it in range(1, max_iter + 1):
        w = X.T @ (X @ v)
        rq_new = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return PowerIterationResult(0.0, it, True)
        v = w / norm
        if it > 1 and abs(rq_new - rq) <= tol * abs(rq_new):
            return PowerIterationResult(rq_new, it, True)
        rq = rq_new
    warnings.warn(f"power iteration did not converge in {max_iter} iterations; "
                  f"last Rayleigh quotient {rq}", RuntimeWarning, stacklevel=2)
    return PowerIterationResult(rq, max_iter, False)


def max_row_norm(X):
    X = _as_csr(X)
    sq = np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return float(math.sqrt(sq.max()))


class LogisticObjective(Objective):
    """Average logistic loss plus ||x||^2/(2m).

    ``features`` is an m-by-n matrix (sparse or dense) whose rows are the
    samples, ``labels`` holds +1/-1.
    """

    def __init__(self, features, labels, constants=None):
        X = _as_csr(features)
        b = np.asarray(labels, dtype=float).ravel()
        m, n = X.shape
        if m < 1 or n < 1:
            raise ValueError("need at least one sample and one feature")
        if b.shape != (m,):
            raise ValueError(f"expected {m} labels, got {b.shape[0]}")
        if not np.all(np.abs(b) == 1.0):
            raise ValueError("labels must be +1 or -1")
        self.X = X
        self.labels = b
        self.m, self.n = m, n
        # rows scaled by their label, so every margin is Z @ x
        self._Z = sp.diags(b) @ X
        self._Z = self._Z.tocsr()
        self.constants = constants if constants is not None else logistic_constants(X)

    def value(self, x):
        x = self._check(x)
        z = self._Z @ x
        return float(np.logaddexp(0.0, -z).sum() / self.m + (x @ x) / (2 * self.m))

    def gradient(self, x):
        x = self._check(x)
        z = self._Z @ x
        return (self._Z.T @ (-expit(-z)) + x) / self.m

    def hvp(self, x, v):
        x = self._check(x)
        v = self._check(v)
        p = expit(self._Z @ x)
        w = p * (1.0 - p)
        return (self.X.T @ (w * (self.X @ v)) + v) / self.m

    def full_hessian(self, x):
        x = self._check(x)
        p = expit(self._Z @ x)
        w = p * (1.0 - p)
        H = (self.X.T @ sp.diags(w) @ self.X).toarray() / self.m
        H[np.diag_indices_from(H)] += 1.0 / self.m
        return 0.5 * (H + H.T)


@dataclass(frozen=True)
class LogisticConstants(SmoothnessConstants):
    """Constants of the regularized logistic loss plus the data statistics behind them."""

    row_norm_max: float = field(default=0.0, compare=False)
    lambda_max: float = field(default=0.0, compare=False)
    power_converged: bool = field(default=True, compare=False)


def logistic_constants(features, lambda_max=None):
    """mu = 1/m, L = lambda_max(X'X)/(4m) + 1/m, M = max_i ||a_i|| sqrt(m) / 2."""
    X = _as_csr(features)
    m = X.shape[0]
    if m < 1:
        raise ValueError("empty dataset")
    A = max_row_norm(X)
    converged = True
    if lambda_max is None:
        res = gram_lambda_max(X)
        lambda_max, converged = res.value, res.converged
    return LogisticConstants(
        mu=1.0 / m,
        L=lambda_max / (4.0 * m) + 1.0 / m,
        M=A * math.sqrt(m) / 2.0,
        row_norm_max=A,
        lambda_max=lambda_max,
        power_converged=converged,
    )


def weighted_norm(obj, x, d):
    """sqrt(d' H(x) d), the local Hessian norm of ``d`` at ``x``."""
    q = float(np.dot(d, obj.hvp(x, d)))
    if not math.isfinite(q):
        raise FloatingPointError("non-finite Hessian quadratic form")
    if q <= 0.0:
        raise FloatingPointError(f"nonpositive Hessian quadratic form {q}")
    return math.sqrt(q)


class CountingObjective:
    """Wraps an objective and counts every evaluation made through it.

    ``trace_value`` is a value call made only to fill the convergence trace;
    it is tallied separately so that algorithmic cost can be reported alone.
    """

    def __init__(self, obj):
        self.obj = obj
        self.n = obj.n
        self.constants = obj.constants
        self.counts = {"value": 0, "gradient": 0, "hvp": 0, "trace_value": 0}

    def value(self, x):
        self.counts["value"] += 1
        return self.obj.value(x)

    def trace_value(self, x):
        self.counts["trace_value"] += 1
        return self.obj.value(x)

    def gradient(self, x):
        self.counts["gradient"] += 1
        return self.obj.gradient(x)

    def hvp(self, x, v):
        self.counts["hvp"] += 1
        return self.obj.hvp(x, v)

    @property
    def evaluations(self):
        c = self.counts
        return c["value"] + c["gradient"] + c["hvp"]
