"""Dense least-squares and singular-value kernel.

Matrices are plain float64 ``numpy.ndarray`` objects.  Every routine here is
deterministic and side-effect free.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "SvdFactors",
    "RichardsonResult",
    "as_matrix",
    "as_vector",
    "svd",
    "rank_tolerance",
    "least_squares",
    "richardson_least_squares",
    "power_iteration",
    "spectral_norm",
    "min_singular_value",
    "min_nonzero_singular_value",
    "normalize_columns",
]


def as_matrix(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise ValueError(f"{name} must be a nonempty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def as_vector(y, name="y"):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite entries")
    return y


@dataclass(frozen=True)
class SvdFactors:
    """Reduced SVD ``A = U @ diag(s) @ Vt`` with a fixed sign convention."""

    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray
    rank: int

    @property
    def V(self):
        return self.Vt.T

    def reconstruct(self):
        return (self.U * self.s) @ self.Vt


def rank_tolerance(shape, smax):
    return max(shape) * np.finfo(float).eps * smax


def svd(A) -> SvdFactors:
    """Reduced SVD of ``A``.

    Signs are normalized so that the first entry of each left singular vector
    whose magnitude exceeds 1e-12 is positive; the matching right singular
    vector is flipped along with it.
    """
    A = as_matrix(A)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    for j in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, j]) > 1e-12)
        if nz.size and U[nz[0], j] < 0:
            U[:, j] = -U[:, j]
            Vt[j, :] = -Vt[j, :]
    smax = s[0] if s.size else 0.0
    rank = int(np.count_nonzero(s > rank_tolerance(A.shape, smax)))
    return SvdFactors(U, s, Vt, rank)


def least_squares(A, y, method="svd"):
    """Minimum-norm least-squares solution ``pinv(A) @ y``.

    ``method="svd"`` truncates singular values below :func:`rank_tolerance`.
    ``method="qr"`` uses LAPACK's complete orthogonal factorization
    (``gelsy``) with the same relative cutoff; it is several times faster and
    agrees with the SVD path whenever ``A`` is not numerically rank deficient.
    """
    A = as_matrix(A)
    y = as_vector(y)
    if A.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: A has {A.shape[0]} rows, y has length {y.shape[0]}")
    if method == "qr":
        cond = max(A.shape) * np.finfo(float).eps
        return scipy.linalg.lstsq(A, y, cond=cond, lapack_driver="gelsy", check_finite=False)[0]
    if method != "svd":
        raise ValueError(f"unknown method {method!r}")
    f = svd(A)
    r = f.rank
    if r == 0:
        return np.zeros(A.shape[1])
    coef = (f.U[:, :r].T @ y) / f.s[:r]
    return f.Vt[:r].T @ coef


def power_iteration(A, steps=20):
    """Estimate of the largest singular value from ``steps`` power iterations on A*A."""
    A = as_matrix(A)
    # fixed start vector keeps the estimate deterministic
    v = np.ones(A.shape[1]) / np.sqrt(A.shape[1])
    est = 0.0
    for _ in range(steps):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        est = np.sqrt(nw)
        v = w / nw
    return float(np.linalg.norm(A @ v)) if steps else est


@dataclass(frozen=True)
class RichardsonResult:
    x: np.ndarray
    iterations: int
    converged: bool


def richardson_least_squares(A, y, relaxation=None, max_iters=10_000, tol=1e-12):
    """Solve the normal equations with the Richardson iteration
    ``x <- x + relaxation * A^T (y - A x)`` started from zero.

    The default relaxation is ``1 / sigma_max(A)**2`` with sigma_max taken from
    20 power-iteration steps.  The iteration stops once the normal-equation
    residual drops below ``tol * ||A^T y||``; otherwise the last iterate is
    returned with ``converged=False``.
    """
    A = as_matrix(A)
    y = as_vector(y)
    if A.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: A has {A.shape[0]} rows, y has length {y.shape[0]}")
    if relaxation is None:
        smax = power_iteration(A, 20)
        if smax == 0.0:
            return RichardsonResult(np.zeros(A.shape[1]), 0, True)
        relaxation = 1.0 / smax**2
    if relaxation <= 0:
        raise ValueError("relaxation must be positive")
    x = np.zeros(A.shape[1])
    g = A.T @ y
    target = tol * np.linalg.norm(g)
    if np.linalg.norm(g) <= target:
        return RichardsonResult(x, 0, True)
    for it in range(1, max_iters + 1):
        x = x + relaxation * g
        g = A.T @ (y - A @ x)
        if np.linalg.norm(g) <= target:
            return RichardsonResult(x, it, True)
    return RichardsonResult(x, max_iters, False)


def spectral_norm(A):
    return float(svd(A).s[0])


def min_singular_value(A):
    return float(svd(A).s[-1])


def min_nonzero_singular_value(A):
    f = svd(A)
    if f.rank == 0:
        return 0.0
    return float(f.s[f.rank - 1])


def normalize_columns(A):
    A = as_matrix(A)
    norms = np.linalg.norm(A, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"column {zero[0]} has zero norm")
    return A / norms
