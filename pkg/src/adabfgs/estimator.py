"""Dense BFGS Hessian estimate kept together with its inverse."""

import math

import numpy as np

from .errors import CurvatureBreakdown

CURVATURE_FLOOR = 1e-12


def _sym(A):
    return 0.5 * (A + A.T)


class HessianEstimate:
    """SPD matrix ``B`` and its inverse ``H``, updated together in O(n^2)."""

    def __init__(self, B, H=None):
        B = _sym(np.array(B, dtype=float))
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError("B must be square")
        np.linalg.cholesky(B)
        self.B = B
        self.H = _sym(np.linalg.inv(B)) if H is None else _sym(np.array(H, dtype=float))
        self.n = B.shape[0]

    @classmethod
    def scaled_identity(cls, n, c):
        if not c > 0:
            raise ValueError(f"scale must be positive, got {c}")
        return cls(c * np.eye(n), np.eye(n) / c)

    def copy(self):
        return HessianEstimate(self.B.copy(), self.H.copy())

    def direction(self, g):
        """Quasi-Newton direction -H g."""
        return -(self.H @ g)

    def update(self, s, y):
        """Apply the BFGS rank-two update for the pair (s, y), in place."""
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        ys = float(y @ s)
        if not ys > CURVATURE_FLOOR * np.linalg.norm(y) * np.linalg.norm(s):
            raise CurvatureBreakdown(f"y's = {ys:.3e} is not safely positive")
        Bs = self.B @ s
        sBs = float(s @ Bs)
        B = self.B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / ys

        # (I - rho s y') H (I - rho y s') + rho s s', expanded
        rho = 1.0 / ys
        Hy = self.H @ y
        yHy = float(y @ Hy)
        H = (self.H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
             + (rho * rho * yHy + rho) * np.outer(s, s))
        self.B = _sym(B)
        self.H = _sym(H)
        return self

    def potential(self, scale=1.0):
        return potential(self.B, scale)

    def potential_star(self, hessian_star):
        return potential_star(self.B, hessian_star)


def potential(B, scale=1.0):
    """Psi(B/scale) = tr(B)/scale - logdet(B) + n ln(scale) - n."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    n = B.shape[0]
    C = np.linalg.cholesky(B)
    logdet = 2.0 * float(np.log(np.diag(C)).sum())
    return float(np.trace(B)) / scale - logdet + n * math.log(scale) - n


def inverse_sqrt(A):
    w, V = np.linalg.eigh(_sym(A))
    if w[0] <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (V / np.sqrt(w)) @ V.T


def potential_star(B, hessian_star):
    """Psi of B measured in the metric of ``hessian_star``."""
    R = inverse_sqrt(hessian_star)
    return potential(_sym(R @ B @ R), 1.0)
