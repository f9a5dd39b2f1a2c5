"""Greedy sparse recovery: Partial Inversion, its wavelet-tree variant, CoSaMP."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import linalg
from .linalg import as_matrix, as_vector

__all__ = [
    "Termination",
    "RecoveryResult",
    "PartInvOptions",
    "RESIDUAL_RTOL",
    "SUCCESS_THRESHOLD",
    "select_top",
    "select_sets",
    "partinv",
    "partinv_wavelet",
    "cosamp",
    "success",
]

RESIDUAL_RTOL = 1e-7
SUCCESS_THRESHOLD = 1e-5


class Termination(str, enum.Enum):
    RESIDUAL_CONVERGED = "residual-converged"
    SUPPORT_STAGNATED = "support-stagnated"
    MAX_ITERATIONS = "max-iterations"


@dataclass(frozen=True)
class RecoveryResult:
    estimate: np.ndarray
    support: np.ndarray
    iterations: int
    residual_norm: float
    termination: Termination


@dataclass(frozen=True)
class PartInvOptions:
    """Knobs for :func:`partinv`.

    ``L=None`` means ``L = K``.  ``max_iterations=None`` means ``max(K, 30)``.
    ``solver`` picks the inner least-squares routine: ``"qr"`` (default),
    ``"svd"`` or ``"richardson"``.
    """

    L: int | None = None
    max_iterations: int | None = None
    residual_tol: float = RESIDUAL_RTOL
    solver: str = "qr"

    @classmethod
    def equal_k(cls, **kw):
        return cls(L=None, **kw)

    @classmethod
    def max_k_08m(cls, K, M, **kw):
        """``L = max(K, floor(0.8 M))``, the preset for correlated ensembles."""
        return cls(L=max(K, int(np.floor(0.8 * M))), **kw)

    def resolve(self, K, M):
        L = K if self.L is None else int(self.L)
        if not K <= L < M:
            raise ValueError(f"need K <= L < M, got K={K}, L={L}, M={M}")
        iters = max(K, 30) if self.max_iterations is None else int(self.max_iterations)
        if iters < 1:
            raise ValueError("max_iterations must be >= 1")
        return L, iters


def select_top(v, L):
    """Sorted indices of the ``L`` largest ``|v_i|``; ties go to the lower index."""
    a = np.abs(np.asarray(v, dtype=float))
    if not 0 <= L <= a.size:
        raise ValueError(f"L={L} outside [0, {a.size}]")
    # stable sort on -|v| keeps lower indices first among equal magnitudes
    order = np.argsort(-a, kind="stable")
    return np.sort(order[:L])


def select_sets(strengths, sets, count):
    """Union of the strongest sets, added in descending strength until it has ``count`` indices.

    Ties in strength go to the lower set number.
    """
    order = np.argsort(-np.asarray(strengths, dtype=float), kind="stable")
    chosen, total = [], 0
    for j in order:
        if total >= count:
            break
        chosen.append(sets[j])
        total += len(sets[j])
    if total < count:
        raise ValueError(f"sets hold only {total} indices, need {count}")
    return np.sort(np.concatenate(chosen)) if chosen else np.array([], dtype=int)


def _solver(name):
    if name in ("svd", "qr"):
        return lambda A, y: linalg.least_squares(A, y, method=name)
    if name == "richardson":
        return lambda A, y: linalg.richardson_least_squares(A, y).x
    raise ValueError(f"unknown least-squares solver {name!r}")


def _check_problem(Phi, y, K):
    Phi = as_matrix(Phi, "Phi")
    y = as_vector(y)
    M, N = Phi.shape
    if y.size != M:
        raise ValueError(f"dimension mismatch: Phi is {M}x{N}, y has length {y.size}")
    if not 0 <= K <= N:
        raise ValueError(f"need 0 <= K <= N, got K={K}")
    return Phi, y


def _finalize(Phi, y, I, K, lstsq, iterations, termination):
    """Invert on ``I``, keep the ``K`` largest entries, re-solve on those columns."""
    N = Phi.shape[1]
    estimate = np.zeros(N)
    if K > 0 and I.size:
        cI = lstsq(Phi[:, I], y)
        keep = I[select_top(cI, min(K, I.size))]
        estimate[keep] = lstsq(Phi[:, keep], y)
        support = keep
    else:
        support = np.array([], dtype=int)
    residual = float(np.linalg.norm(y - Phi @ estimate))
    return RecoveryResult(estimate, support, iterations, residual, termination)


def _zero_result(N):
    return RecoveryResult(np.zeros(N), np.array([], dtype=int), 1, 0.0, Termination.RESIDUAL_CONVERGED)


def _partial_inversion_loop(Phi, y, I, reselect, max_iterations, residual_tol, lstsq):
    """Shared inner loop: invert on ``I``, back-project the residual on the
    complement, reselect.  Returns the final index set, iteration count and reason.

    The next index set depends only on the current one, so revisiting any
    earlier set means the iteration is cycling; that is reported as stagnation.
    """
    N = Phi.shape[1]
    target = residual_tol * np.linalg.norm(y)
    seen = {I.tobytes()}
    it = 0
    while True:
        it += 1
        c = np.zeros(N)
        c[I] = lstsq(Phi[:, I], y)
        r = y - Phi[:, I] @ c[I]
        if np.linalg.norm(r) <= target:
            return I, it, Termination.RESIDUAL_CONVERGED
        J = np.ones(N, dtype=bool)
        J[I] = False
        c[J] = Phi[:, J].T @ r
        I_next = reselect(c)
        key = I_next.tobytes()
        if key in seen:
            return I, it, Termination.SUPPORT_STAGNATED
        seen.add(key)
        I = I_next
        if it >= max_iterations:
            return I, it, Termination.MAX_ITERATIONS


def partinv(Phi, y, K, opts=None):
    """Partial Inversion recovery of a ``K``-sparse ``c`` from ``y = Phi c``.

    Starting from the ``L`` largest entries of ``Phi^T y``, each iteration
    solves least squares on the current index set ``I``, correlates the
    residual with the remaining columns, and keeps the ``L`` largest entries
    of the combined estimate as the next ``I``.  Stops when the residual is
    below ``residual_tol * ||y||``, when ``I`` repeats, or after
    ``max_iterations``.  The output is cut down to ``K`` entries and refit.
    """
    opts = opts or PartInvOptions()
    Phi, y = _check_problem(Phi, y, K)
    M, N = Phi.shape
    L, max_iterations = opts.resolve(K, M)
    if not np.any(y):
        return _zero_result(N)
    lstsq = _solver(opts.solver)
    I = select_top(Phi.T @ y, L)
    I, it, why = _partial_inversion_loop(
        Phi, y, I, lambda c: select_top(c, L), max_iterations, opts.residual_tol, lstsq
    )
    return _finalize(Phi, y, I, K, lstsq, it, why)


def partinv_wavelet(Phi, y, K, partition, opts=None):
    """Partial Inversion with set-level selection over a :class:`TreePartition`.

    Sets are ranked by the summed magnitude of the current estimate over their
    members, and whole sets are taken in that order until at least
    ``max(K, L)`` coefficients are covered.
    """
    opts = opts or PartInvOptions()
    Phi, y = _check_problem(Phi, y, K)
    M, N = Phi.shape
    if partition.n_coefficients != N:
        raise ValueError(f"partition covers {partition.n_coefficients} coefficients, Phi has {N} columns")
    covered = np.concatenate(partition.sets)
    if covered.size != N or np.unique(covered).size != N:
        raise ValueError("partition is not a disjoint cover of the columns")
    count = K if opts.L is None else int(opts.L)
    if count < K:
        raise ValueError(f"need L >= K, got L={count}, K={K}")
    max_iterations = max(K, 30) if opts.max_iterations is None else int(opts.max_iterations)
    if not np.any(y):
        return _zero_result(N)
    lstsq = _solver(opts.solver)
    sets = partition.sets

    def reselect(c):
        strengths = np.array([np.abs(c[s]).sum() for s in sets])
        return select_sets(strengths, sets, count)

    I = reselect(Phi.T @ y)
    I, it, why = _partial_inversion_loop(Phi, y, I, reselect, max_iterations, opts.residual_tol, lstsq)
    return _finalize(Phi, y, I, K, lstsq, it, why)


def cosamp(Phi, y, K, max_iters=None, residual_tol=RESIDUAL_RTOL, solver="qr"):
    """Compressive Sampling Matching Pursuit.

    Each iteration merges the ``2K`` largest residual correlations with the
    current support, solves least squares on the merged set and prunes to the
    ``K`` largest entries.  Same stopping rules as :func:`partinv`.
    """
    Phi, y = _check_problem(Phi, y, K)
    M, N = Phi.shape
    if K < 1:
        raise ValueError("K must be >= 1")
    max_iters = max(K, 30) if max_iters is None else int(max_iters)
    if not np.any(y):
        return _zero_result(N)
    lstsq = _solver(solver)
    target = residual_tol * np.linalg.norm(y)
    support = np.array([], dtype=int)
    seen = {support.tobytes()}
    estimate = np.zeros(N)
    r = y
    it = 0
    why = Termination.MAX_ITERATIONS
    while it < max_iters:
        it += 1
        proxy = Phi.T @ r
        merged = np.union1d(select_top(proxy, min(2 * K, N)), support)
        b = lstsq(Phi[:, merged], y)
        new_support = merged[select_top(b, K)]
        estimate = np.zeros(N)
        estimate[new_support] = b[np.searchsorted(merged, new_support)]
        r = y - Phi[:, new_support] @ estimate[new_support]
        stagnated = new_support.tobytes() in seen
        seen.add(new_support.tobytes())
        support = new_support
        if np.linalg.norm(r) <= target:
            why = Termination.RESIDUAL_CONVERGED
            break
        if stagnated:
            why = Termination.SUPPORT_STAGNATED
            break
    residual = float(np.linalg.norm(y - Phi @ estimate))
    return RecoveryResult(estimate, support, it, residual, why)


def success(c, estimate):
    """True when the mean squared coefficient error is below ``1e-5``."""
    c = np.asarray(getattr(c, "values", c), dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if c.shape != estimate.shape:
        raise ValueError(f"length mismatch: {c.shape} vs {estimate.shape}")
    return bool(np.sum((c - estimate) ** 2) / c.size < SUCCESS_THRESHOLD)
