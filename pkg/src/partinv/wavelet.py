"""Orthogonal wavelet bases and the wavelet-tree partition.

Coefficient layout (1-D): ``[a_J, d_J, d_{J-1}, ..., d_1]`` with level 1 the
finest.  Coefficient layout (2-D, Mallat): a ``side x side`` array whose
top-left block holds the coarsest approximation; at level ``l`` with subband
size ``s = side >> l`` the detail subbands sit at

* ``LH``: rows ``[0, s)``, cols ``[s, 2s)``
* ``HL``: rows ``[s, 2s)``, cols ``[0, s)``
* ``HH``: rows ``[s, 2s)``, cols ``[s, 2s)``

and the vector index of entry ``(row, col)`` is ``row * side + col``.  Images
are vectorized row-major as well.  All transforms use periodic extension.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from pathlib import Path

import numpy as np

ORIENTATIONS = ("LH", "HL", "HH")

__all__ = [
    "ORIENTATIONS",
    "TreePartition",
    "daubechies_filter",
    "analysis_matrix_1d",
    "dwt2",
    "idwt2",
    "haar_basis",
    "daubechies_basis_2d",
    "daubechies5_basis_2d",
    "coefficient_index",
    "tree_partition",
    "set_strength",
]


@lru_cache(maxsize=None)
def _daubechies_filter(p):
    if p == 1:
        return (2**-0.5, 2**-0.5)
    # roots of the half-band polynomial sum_k C(p-1+k, k) y^k, y = sin^2(w/2)
    poly = [comb(p - 1 + k, k) for k in range(p)]
    y_roots = np.roots(poly[::-1])
    h = np.array([1.0])
    for _ in range(p):
        h = np.convolve(h, [0.5, 0.5])
    for y in y_roots:
        # y = (2 - z - 1/z) / 4  <=>  z^2 - (2 - 4y) z + 1 = 0; keep the root inside the unit circle
        zs = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        z = zs[np.argmin(np.abs(zs))]
        h = np.convolve(h, [1.0, -z])
    h = np.real(h)
    h = h * (np.sqrt(2.0) / h.sum())
    return tuple(h)


def daubechies_filter(p):
    """Minimum-phase Daubechies scaling filter with ``p`` vanishing moments (``2p`` taps).

    ``p = 1`` is Haar.  Coefficients sum to ``sqrt(2)`` and are orthonormal
    under even shifts.
    """
    if p < 1:
        raise ValueError("need at least one vanishing moment")
    return np.array(_daubechies_filter(int(p)))


def analysis_matrix_1d(n, h):
    """Single-level periodic analysis operator: ``n/2`` lowpass rows then ``n/2`` highpass rows."""
    if n % 2:
        raise ValueError(f"signal length {n} must be even")
    h = np.asarray(h, dtype=float)
    taps = h.size
    g = np.array([(-1) ** k * h[taps - 1 - k] for k in range(taps)])
    W = np.zeros((n, n))
    half = n // 2
    idx = np.arange(taps)
    for i in range(half):
        cols = (2 * i + idx) % n
        np.add.at(W[i], cols, h)
        np.add.at(W[half + i], cols, g)
    return W


@lru_cache(maxsize=64)
def _analysis_cached(n, h_key):
    W = analysis_matrix_1d(n, np.array(h_key))
    W.setflags(write=False)
    return W


def _check_levels(side, levels):
    if levels < 0 or side % (1 << levels):
        raise ValueError(f"side={side} must be divisible by 2**levels={1 << levels}")


def dwt2(image, h, levels):
    """Forward periodic 2-D DWT.  Leading axes of ``image`` are treated as a batch."""
    X = np.array(image, dtype=float, copy=True)
    side = X.shape[-1]
    if X.shape[-2] != side:
        raise ValueError("images must be square")
    _check_levels(side, levels)
    key = tuple(np.asarray(h, dtype=float))
    s = side
    for _ in range(levels):
        W = _analysis_cached(s, key)
        X[..., :s, :s] = W @ X[..., :s, :s] @ W.T
        s //= 2
    return X


def idwt2(coeffs, h, levels):
    """Inverse of :func:`dwt2`."""
    X = np.array(coeffs, dtype=float, copy=True)
    side = X.shape[-1]
    _check_levels(side, levels)
    key = tuple(np.asarray(h, dtype=float))
    for lev in range(levels, 0, -1):
        s = side >> (lev - 1)
        W = _analysis_cached(s, key)
        X[..., :s, :s] = W.T @ X[..., :s, :s] @ W
    return X


def _dwt1(x, h, levels):
    x = np.array(x, dtype=float, copy=True)
    n = x.shape[-1]
    key = tuple(np.asarray(h, dtype=float))
    for lev in range(levels):
        s = n >> lev
        x[..., :s] = x[..., :s] @ _analysis_cached(s, key).T
    return x


def _idwt1(c, h, levels):
    x = np.array(c, dtype=float, copy=True)
    n = x.shape[-1]
    key = tuple(np.asarray(h, dtype=float))
    for lev in range(levels, 0, -1):
        s = n >> (lev - 1)
        x[..., :s] = x[..., :s] @ _analysis_cached(s, key)
    return x


def haar_basis(n):
    """Orthonormal full-depth Haar synthesis matrix (columns are basis vectors)."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"n={n} is not a power of 2")
    levels = n.bit_length() - 1
    # row j of the batch is the synthesis of e_j
    return _idwt1(np.eye(n), daubechies_filter(1), levels).T


def haar_forward(x):
    n = np.shape(x)[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"n={n} is not a power of 2")
    return _dwt1(x, daubechies_filter(1), n.bit_length() - 1)


def haar_inverse(c):
    n = np.shape(c)[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"n={n} is not a power of 2")
    return _idwt1(c, daubechies_filter(1), n.bit_length() - 1)


def daubechies_basis_2d(side, levels, moments):
    _check_levels(side, levels)
    n = side * side
    unit = np.eye(n).reshape(n, side, side)
    cols = idwt2(unit, daubechies_filter(moments), levels).reshape(n, n)
    return np.ascontiguousarray(cols.T)


def daubechies5_basis_2d(side=32, levels=5):
    """``side^2 x side^2`` synthesis matrix of the 2-D db5 (10-tap) wavelet.

    Column ``j`` is the row-major image produced by the inverse transform of
    the ``j``-th unit coefficient vector.
    """
    return daubechies_basis_2d(side, levels, 5)


def coefficient_index(side, level, orientation, row, col):
    """Vector index of a detail coefficient in the Mallat layout."""
    s = side >> level
    if not (0 <= row < s and 0 <= col < s):
        raise ValueError(f"position ({row}, {col}) outside level-{level} subband of size {s}")
    dr, dc = {"LH": (0, s), "HL": (s, 0), "HH": (s, s)}[orientation]
    return (dr + row) * side + (dc + col)


@dataclass(frozen=True)
class TreePartition:
    """Disjoint cover of the 2-D coefficient vector by one coarse block and quadtrees.

    ``roots[i]`` is ``(orientation, row, col)`` of the level-``root_level`` root
    of set ``i``; it is ``None`` for the coarse set.
    """

    side: int
    levels: int
    sets: tuple
    roles: tuple
    roots: tuple
    root_level: int = 3

    @property
    def n_coefficients(self):
        return self.side * self.side

    def __len__(self):
        return len(self.sets)

    def tree_indices(self):
        return [i for i, r in enumerate(self.roles) if r == "tree"]

    def membership(self):
        """Array mapping each coefficient index to its set number."""
        owner = np.full(self.n_coefficients, -1, dtype=int)
        for i, s in enumerate(self.sets):
            owner[s] = i
        return owner

    def to_text(self):
        return "".join(f"{role} {' '.join(map(str, s))}\n" for role, s in zip(self.roles, self.sets))

    def save(self, path):
        Path(path).write_text(self.to_text())


def tree_partition(side=32, levels=5):
    """Split the coefficients into a coarse block and 3-scale quadtrees.

    Trees are rooted at level 3; each root keeps its 4 children at level 2
    and 16 grandchildren at level 1 in the same orientation (1 + 4 + 16 = 21
    coefficients).  Everything at level 4 and coarser, plus the approximation,
    forms the coarse set.  For ``side=32, levels=5`` this yields a 4x4 coarse
    block and 48 trees.
    """
    root_level = 3
    if levels < root_level:
        raise ValueError(f"need at least {root_level} levels, got {levels}")
    _check_levels(side, levels)
    nroot = side >> root_level
    coarse = np.array(sorted(r * side + c for r in range(nroot) for c in range(nroot)))
    sets, roles, roots = [coarse], ["coarse"], [None]
    for o in ORIENTATIONS:
        for i in range(nroot):
            for j in range(nroot):
                members = []
                for depth in range(root_level):
                    lev = root_level - depth
                    f = 1 << depth
                    for a in range(f):
                        for b in range(f):
                            members.append(coefficient_index(side, lev, o, f * i + a, f * j + b))
                sets.append(np.array(sorted(members)))
                roles.append("tree")
                roots.append((o, i, j))
    for s in sets:
        s.setflags(write=False)
    return TreePartition(side, levels, tuple(sets), tuple(roles), tuple(roots), root_level)


def set_strength(proxy, partition):
    """Sum of absolute proxy values over each set of the partition."""
    proxy = np.asarray(proxy, dtype=float)
    if proxy.shape != (partition.n_coefficients,):
        raise ValueError(f"proxy length {proxy.size} != {partition.n_coefficients}")
    a = np.abs(proxy)
    return np.array([a[s].sum() for s in partition.sets])
