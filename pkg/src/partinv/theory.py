"""Numerical checks of the exact-recovery conditions for Partial Inversion.

For a ``K``-sparse ``c`` with support ``T``, a subset size ``L`` and constants
``delta``, ``A`` the recovery guarantee needs

* signal:      ``|c_i| >= 3 delta ||c||`` on ``T`` and ``0 < delta <= 1/(3 sqrt K)``
* support:     ``sigma_min(Phi_T1) >= 1 - delta`` for every ``T1`` in ``T``
* upper:       ``||Phi_I|| <= A`` for every ``|I| <= L``
* pinv:        ``||pinv(Phi_I)|| <= A`` for every ``|I| <= L``
* projection:  ``||Phi_I pinv(Phi_I) Phi_{T minus I}|| <= delta / A`` for every ``|I| <= L``

with ``1 <= A < sqrt(L)``.  Quantifying over every ``|I| <= L`` is only
feasible for tiny problems, so exhaustive checks are gated to ``N <= 32`` and
``L <= 4``; the sampled mode does not certify anything.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .linalg import as_matrix, rank_tolerance
from .sensing import RngStream, SparseSignal, _gen

__all__ = [
    "EXHAUSTIVE_MAX_N",
    "EXHAUSTIVE_MAX_L",
    "SignalCheck",
    "ConditionResult",
    "SubsetStats",
    "TheoremReport",
    "AppendixCheck",
    "InstanceSearchFailed",
    "check_signal",
    "subset_stats",
    "check_dictionary",
    "verify_appendix_bounds",
    "construct_theorem_instance",
]

EXHAUSTIVE_MAX_N = 32
EXHAUSTIVE_MAX_L = 4

# slack accepted on inequalities that hold with equality in exact arithmetic
_ROUNDING = 1e-12


@dataclass(frozen=True)
class SignalCheck:
    passed: bool
    margin: float
    delta_ok: bool


def check_signal(c, delta):
    """Magnitude floor ``min |c_i| >= 3 delta ||c||`` plus the range of ``delta``.

    ``margin`` is ``min_i |c_i| - 3 delta ||c||`` over the support.
    """
    if not isinstance(c, SparseSignal):
        c = SparseSignal(np.asarray(c, dtype=float))
    if c.K == 0:
        raise ValueError("signal is zero")
    norm = float(np.linalg.norm(c.values))
    margin = float(np.min(np.abs(c.values[c.support])) - 3.0 * delta * norm)
    delta_ok = 0.0 < delta <= 1.0 / (3.0 * math.sqrt(c.K)) * (1 + _ROUNDING)
    return SignalCheck(delta_ok and margin >= -_ROUNDING * norm, margin, delta_ok)


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    margin: float
    worst: tuple = ()


@dataclass(frozen=True)
class SubsetStats:
    """Extreme values of the subset quantities over a family of index sets."""

    max_sigma: float
    max_sigma_at: tuple
    max_pinv: float
    max_pinv_at: tuple
    max_projection: float
    max_projection_at: tuple
    count: int

    @property
    def A_required(self):
        return max(1.0, self.max_sigma, self.max_pinv)


def _batched_stats(Phi, T, subsets):
    """sigma_max, 1/sigma_r and projection norm for a list of equal-size subsets."""
    idx = np.array(subsets, dtype=int)
    B = Phi[:, idx].transpose(1, 0, 2)  # (n, M, k)
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    smax = s[:, 0]
    tol = rank_tolerance(B.shape[1:], smax)[:, None]
    keep = s > tol
    rank = keep.sum(axis=1)
    smallest = np.where(rank > 0, np.take_along_axis(s, np.maximum(rank - 1, 0)[:, None], axis=1)[:, 0], np.inf)
    pinv_norm = np.where(rank > 0, 1.0 / smallest, 0.0)
    if len(T) == 0:
        return smax, pinv_norm, np.zeros(len(idx))
    U = U * keep[:, None, :]
    PT = Phi[:, T]
    # zero the columns of T that already lie in I
    outside = ~(idx[:, :, None] == np.asarray(T)[None, None, :]).any(axis=1)
    G = np.einsum("nmk,mt->nkt", U, PT) * outside[:, None, :]
    proj = np.linalg.norm(G, ord=2, axis=(1, 2))
    return smax, pinv_norm, proj


def subset_stats(Phi, T, subsets):
    """Worst-case subset quantities over ``subsets`` (any iterable of index tuples)."""
    Phi = as_matrix(Phi, "Phi")
    T = [int(t) for t in T]
    by_size = {}
    for I in subsets:
        I = tuple(sorted(int(i) for i in I))
        if I:
            by_size.setdefault(len(I), []).append(I)
    best = {"sigma": (-1.0, ()), "pinv": (-1.0, ()), "proj": (-1.0, ())}
    count = 0
    for size in sorted(by_size):
        group = by_size[size]
        count += len(group)
        for start in range(0, len(group), 4096):
            chunk = group[start:start + 4096]
            smax, pinv_norm, proj = _batched_stats(Phi, T, chunk)
            for key, vals in (("sigma", smax), ("pinv", pinv_norm), ("proj", proj)):
                j = int(np.argmax(vals))
                if vals[j] > best[key][0]:
                    best[key] = (float(vals[j]), chunk[j])
    return SubsetStats(
        best["sigma"][0], best["sigma"][1],
        best["pinv"][0], best["pinv"][1],
        best["proj"][0], best["proj"][1],
        count,
    )


def _all_subsets(N, L):
    for k in range(1, L + 1):
        yield from combinations(range(N), k)


@dataclass(frozen=True)
class TheoremReport:
    delta: float
    A: float
    K: int
    L: int
    support: ConditionResult
    upper: ConditionResult
    pinv: ConditionResult
    projection: ConditionResult
    mode: str
    subsets_checked: int
    signal: SignalCheck | None = None
    A_required: float = float("nan")
    delta_required: float = float("nan")
    warnings: tuple = field(default=())

    @property
    def dictionary_passed(self):
        return all(c.passed for c in (self.support, self.upper, self.pinv, self.projection))

    @property
    def passed(self):
        return self.dictionary_passed and (self.signal is None or self.signal.passed)

    @property
    def certified(self):
        return self.passed and self.mode == "exhaustive" and self.signal is not None

    def to_text(self):
        """Flat ``key=value`` lines."""
        items = [
            ("mode", self.mode),
            ("certified", self.certified),
            ("K", self.K),
            ("L", self.L),
            ("delta", self.delta),
            ("A", self.A),
            ("delta_required", self.delta_required),
            ("A_required", self.A_required),
            ("subsets_checked", self.subsets_checked),
        ]
        if self.signal is not None:
            items += [("signal.pass", self.signal.passed), ("signal.margin", self.signal.margin)]
        for cond in (self.support, self.upper, self.pinv, self.projection):
            items += [
                (f"{cond.name}.pass", cond.passed),
                (f"{cond.name}.margin", cond.margin),
                (f"{cond.name}.worst", " ".join(map(str, cond.worst))),
            ]
        for i, w in enumerate(self.warnings):
            items.append((f"warning.{i}", w))
        return "".join(f"{k}={_fmt(v)}\n" for k, v in items)


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _validate(Phi, T, L, A, delta):
    M, N = Phi.shape
    K = len(T)
    if len(set(T)) != K or any(not 0 <= t < N for t in T):
        raise ValueError("support must hold distinct column indices")
    if not 1 <= K <= L < M:
        raise ValueError(f"need 1 <= K <= L < M, got K={K}, L={L}, M={M}")
    if not 1.0 <= A < math.sqrt(L):
        raise ValueError(f"need 1 <= A < sqrt(L) = {math.sqrt(L):.4g}, got A={A}")
    if not delta > 0:
        raise ValueError("delta must be positive")


def check_dictionary(Phi, T, L, A, delta, mode="exhaustive", samples=500, rng=None,
                     extra_subsets=(), c=None):
    """Check the dictionary conditions for support ``T`` and produce a :class:`TheoremReport`.

    ``mode="exhaustive"`` enumerates every nonempty ``|I| <= L`` and every
    ``T1`` in ``T``.  ``mode="sampled"`` draws ``samples`` random index sets
    (sizes uniform on ``1..L``) and adds ``extra_subsets``, for instance the
    index sets visited by a recovery run.  If ``c`` is given the signal
    condition is checked too.
    """
    Phi = as_matrix(Phi, "Phi")
    T = sorted(int(t) for t in T)
    _validate(Phi, T, L, A, delta)
    M, N = Phi.shape
    K = len(T)
    notes = []
    if K <= 3:
        notes.append("K<=3: the one-new-index step of the argument needs delta < 1/(2 sqrt(K) + 2)")

    if mode == "exhaustive":
        if N > EXHAUSTIVE_MAX_N or L > EXHAUSTIVE_MAX_L:
            raise ValueError(f"exhaustive mode limited to N <= {EXHAUSTIVE_MAX_N}, L <= {EXHAUSTIVE_MAX_L}")
        subsets = _all_subsets(N, L)
        t1s = [t1 for k in range(1, K + 1) for t1 in combinations(T, k)]
    elif mode == "sampled":
        g = _gen(rng if rng is not None else RngStream(0))
        drawn = []
        for _ in range(samples):
            k = int(g.integers(1, L + 1))
            drawn.append(tuple(g.choice(N, size=k, replace=False)))
        subsets = drawn + [tuple(s) for s in extra_subsets if 0 < len(s) <= L]
        # sigma_min of the whole support bounds every T1 by interlacing
        t1s = [tuple(T)]
        mode = f"sampled({samples})"
    else:
        raise ValueError(f"unknown mode {mode!r}")

    stats = subset_stats(Phi, T, subsets)
    worst_t1, sig_min = (), np.inf
    for t1 in t1s:
        s = np.linalg.svd(Phi[:, list(t1)], compute_uv=False)[-1]
        if s < sig_min:
            sig_min, worst_t1 = float(s), tuple(t1)
    if c is not None:
        c_vals = np.asarray(getattr(c, "values", c), dtype=float)
        literal_ok = True
        for t1 in t1s:
            cols = list(t1)
            lhs = np.linalg.norm(Phi[:, cols].T @ (Phi[:, cols] @ c_vals[cols]))
            if lhs < (1 - delta) ** 2 * np.linalg.norm(c_vals[cols]) * (1 - _ROUNDING):
                literal_ok = False
                worst_t1 = tuple(t1)
                break
    else:
        literal_ok = True

    support = ConditionResult(
        "support", bool(sig_min >= (1 - delta) - _ROUNDING and literal_ok), sig_min - (1 - delta), worst_t1
    )
    upper = ConditionResult(
        "upper", stats.max_sigma <= A + _ROUNDING, A - stats.max_sigma, stats.max_sigma_at
    )
    pinv = ConditionResult("pinv", stats.max_pinv <= A + _ROUNDING, A - stats.max_pinv, stats.max_pinv_at)
    projection = ConditionResult(
        "projection",
        stats.max_projection <= delta / A + _ROUNDING,
        delta / A - stats.max_projection,
        stats.max_projection_at,
    )
    signal = check_signal(c, delta) if c is not None else None
    if signal is not None and not signal.delta_ok:
        notes.append("delta exceeds 1/(3 sqrt(K))")
    return TheoremReport(
        delta=float(delta),
        A=float(A),
        K=K,
        L=int(L),
        support=support,
        upper=upper,
        pinv=pinv,
        projection=projection,
        mode=mode,
        subsets_checked=stats.count,
        signal=signal,
        A_required=stats.A_required,
        delta_required=max(1 - sig_min, A * stats.max_projection),
        warnings=tuple(notes),
    )


@dataclass(frozen=True)
class AppendixCheck:
    """Outcome of :func:`verify_appendix_bounds`.

    ``status`` is ``"ok"`` when the hypotheses held for the given ``I`` and
    ``"precondition-failed"`` otherwise; in the latter case the bounds are
    still computed but nothing is claimed about them.
    """

    status: str
    adjoint_norm: float
    pinv_norm: float
    adjoint_ok: bool
    pinv_ok: bool

    @property
    def passed(self):
        return self.status == "ok" and self.adjoint_ok and self.pinv_ok


def verify_appendix_bounds(Phi, I, T, delta, A):
    """Check ``||Phi_I^T Phi_{T minus I}|| <= delta`` and ``||pinv(Phi_I) Phi_{T minus I}|| <= delta``.

    These follow from the upper, pinv and projection conditions for this
    ``I``; those are tested first.
    """
    Phi = as_matrix(Phi, "Phi")
    I = sorted(int(i) for i in I)
    rest = sorted(set(int(t) for t in T) - set(I))
    if not I:
        raise ValueError("I must be nonempty")
    PI = Phi[:, I]
    U, s, Vt = np.linalg.svd(PI, full_matrices=False)
    r = int(np.count_nonzero(s > rank_tolerance(PI.shape, s[0])))
    if not rest:
        pre = s[0] <= A + _ROUNDING and (r == 0 or 1 / s[r - 1] <= A + _ROUNDING)
        return AppendixCheck("ok" if pre else "precondition-failed", 0.0, 0.0, True, True)
    Ur = U[:, :r]
    PR = Phi[:, rest]
    projection = np.linalg.norm(Ur.T @ PR, 2)
    pre = (
        s[0] <= A + _ROUNDING
        and (r == 0 or 1 / s[r - 1] <= A + _ROUNDING)
        and projection <= delta / A + _ROUNDING
    )
    adjoint = float(np.linalg.norm(PI.T @ PR, 2))
    pinv = (Vt[:r].T / s[:r]) @ Ur.T
    pinv_n = float(np.linalg.norm(pinv @ PR, 2))
    return AppendixCheck(
        "ok" if pre else "precondition-failed",
        adjoint,
        pinv_n,
        adjoint <= delta + _ROUNDING,
        pinv_n <= delta + _ROUNDING,
    )


class InstanceSearchFailed(RuntimeError):
    def __init__(self, message, best_report=None):
        super().__init__(message)
        self.best_report = best_report


def _random_orthonormal(g, M, k):
    Q, R = np.linalg.qr(g.standard_normal((M, k)))
    return Q * np.sign(np.diag(R))


def _candidate(g, M, N, T):
    """Near-orthogonal dictionary whose support columns are almost orthogonal to the rest."""
    K = len(T)
    if M == N:
        Phi = _random_orthonormal(g, M, N)
        eps = g.uniform(0.0, 0.02)
        Phi = Phi + eps * g.standard_normal((M, N)) / math.sqrt(M)
        return Phi / np.linalg.norm(Phi, axis=0)
    Q = _random_orthonormal(g, M, M)
    QT, Qc = Q[:, :K], Q[:, K:]
    others = N - K
    # spread the off-support columns as a tight frame in the complement of span(Q_T)
    F = _random_orthonormal(g, others, M - K).T if others >= M - K else np.eye(M - K)[:, :others]
    F = F / np.linalg.norm(F, axis=0)
    rest = Qc @ F
    leak = g.uniform(0.0, 0.03)
    rest = rest + leak * QT @ g.standard_normal((K, others)) / math.sqrt(K)
    Phi = np.empty((M, N))
    Phi[:, T] = QT
    mask = np.ones(N, dtype=bool)
    mask[T] = False
    Phi[:, mask] = rest
    return Phi / np.linalg.norm(Phi, axis=0)


def construct_theorem_instance(M, N, K, L, rng, A=None, budget=10_000):
    """Rejection-sample a small ``(Phi, c)`` that passes every condition exhaustively.

    ``A`` defaults to the smallest admissible value for the drawn dictionary.
    ``delta`` is set to the smallest value the dictionary allows (the proof's
    one-new-index inequality ``delta < 1/(2 sqrt K + 2)`` is enforced as well,
    which matters for ``K <= 3``).  Raises :class:`InstanceSearchFailed` when
    ``budget`` candidates are exhausted.
    """
    if A is not None and not 1.0 <= A < math.sqrt(L):
        raise ValueError(f"need 1 <= A < sqrt(L) = {math.sqrt(L):.4g}, got A={A}")
    if not 1 <= K <= L < M <= N:
        raise ValueError(f"need 1 <= K <= L < M <= N, got K={K}, L={L}, M={M}, N={N}")
    if N > EXHAUSTIVE_MAX_N or L > EXHAUSTIVE_MAX_L:
        raise ValueError(f"instances are certified exhaustively: need N <= {EXHAUSTIVE_MAX_N}, L <= {EXHAUSTIVE_MAX_L}")
    g = _gen(rng)
    delta_cap = min(1.0 / (3.0 * math.sqrt(K)), 1.0 / (2.0 * math.sqrt(K) + 2.0))
    best = None
    for _ in range(budget):
        T = np.sort(g.choice(N, size=K, replace=False))
        Phi = _candidate(g, M, N, T)
        stats = subset_stats(Phi, T, _all_subsets(N, L))
        A_use = stats.A_required if A is None else A
        if A_use >= math.sqrt(L) or A_use < stats.A_required:
            continue
        sig_min = np.linalg.svd(Phi[:, T], compute_uv=False)[-1]
        delta = max(1.0 - sig_min, A_use * stats.max_projection, 1e-9) * (1 + 1e-6)
        if delta >= delta_cap:
            continue
        c = None
        for _ in range(100):
            vals = np.zeros(N)
            vals[T] = g.standard_normal(K)
            if check_signal(SparseSignal(vals, T), delta).passed:
                c = SparseSignal(vals, T)
                break
        if c is None:
            continue
        report = check_dictionary(Phi, T, L, A_use, delta, mode="exhaustive", c=c)
        if report.certified:
            return Phi, c, report
        best = report
    raise InstanceSearchFailed(f"no certified instance within {budget} candidates", best)
