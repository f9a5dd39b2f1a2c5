"""Sensing matrices, signal ensembles and acquisition operators.

Every random generator takes an :class:`RngStream`; there is no global RNG
state, so an experiment is fully determined by its seed and stream ids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import as_matrix, normalize_columns

__all__ = [
    "RngStream",
    "SparseSignal",
    "SamplingPattern",
    "SAMPLING_PATTERNS",
    "LOWPASS_KERNEL_1D",
    "default_blur_kernel",
    "gaussian_matrix",
    "correlated_block_matrix",
    "filter_downsample_1d",
    "blur_operator_2d",
    "sampling_operator",
    "compose_sensing",
    "correlation_map",
    "random_sparse_signal",
    "clustered_sparse_signal",
    "save_dmat",
    "load_dmat",
]


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by Philox seeded through ``SeedSequence(seed, spawn_key=stream_id)``,
    which gives platform-independent sequences and independent streams for
    distinct ids.
    """

    seed: int
    stream_id: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "stream_id", tuple(int(s) for s in self.stream_id))
        if any(s < 0 for s in self.stream_id):
            raise ValueError("stream ids must be non-negative")

    def child(self, *ids):
        return RngStream(self.seed, self.stream_id + tuple(ids))

    def generator(self):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.stream_id)
        return np.random.Generator(np.random.Philox(ss))


def _gen(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


@dataclass(frozen=True)
class SparseSignal:
    values: np.ndarray
    support: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        support = np.flatnonzero(values) if self.support is None else np.asarray(self.support, dtype=int)
        support = np.unique(support)
        off = np.ones(values.size, dtype=bool)
        off[support] = False
        if np.any(values[off] != 0):
            raise ValueError("signal has nonzero values outside its support")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "support", support)

    @property
    def N(self):
        return self.values.size

    @property
    def K(self):
        return self.support.size


@dataclass(frozen=True)
class SamplingPattern:
    base: np.ndarray
    replication: int = 8

    def __post_init__(self):
        base = np.asarray(self.base, dtype=int)
        if base.shape != (4, 4) or not np.isin(base, (0, 1)).all():
            raise ValueError("sampling pattern base must be a 4x4 binary mask")
        object.__setattr__(self, "base", base)

    @property
    def rate(self):
        return int(self.base.sum()) / 16

    def mask(self):
        return np.tile(self.base, (self.replication, self.replication))


def _pattern(rows):
    return np.array(rows, dtype=int)


# sampling masks keyed by number of ones per 4x4 tile
SAMPLING_PATTERNS = {
    2: _pattern([[0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1]]),
    4: _pattern([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]),
    6: _pattern([[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 0, 0], [0, 0, 1, 0]]),
    8: _pattern([[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1]]),
    10: _pattern([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 1, 1], [1, 1, 0, 1]]),
    12: _pattern([[1, 1, 0, 1], [0, 1, 1, 1], [1, 1, 1, 0], [1, 0, 1, 1]]),
    14: _pattern([[1, 1, 1, 1], [1, 1, 0, 1], [1, 1, 1, 1], [0, 1, 1, 1]]),
}

LOWPASS_KERNEL_1D = np.array([0.1, 0.2, 0.4, 0.2, 0.1])


def default_blur_kernel():
    """5x5 near-delta blur: 0.29 at the center, 0.02 elsewhere (sum 0.77)."""
    k = np.full((5, 5), 0.02)
    k[2, 2] = 0.29
    return k


def gaussian_matrix(M, N, rng):
    """M x N matrix of i.i.d. N(0, 1) entries with unit-norm columns."""
    if not 1 <= M <= N:
        raise ValueError(f"need 1 <= M <= N, got M={M}, N={N}")
    A = _gen(rng).standard_normal((M, N))
    return normalize_columns(A)


def correlated_block_matrix(M, N=256, subsets=16, rng=None, block_var=0.0625, noise_var=None,
                            normalize=True):
    """Matrix with heavily correlated column groups.

    Columns are split into ``subsets`` contiguous groups.  Group ``j`` has a
    band of rows set to ``1 + N(0, block_var)``; everything else is zero.
    Then ``N(0, noise_var)`` noise (default ``1/M``) is added everywhere and
    the columns are normalized.

    When ``subsets`` divides ``M`` each band has ``M/subsets`` rows.  Otherwise
    band ``j`` covers rows ``floor(j*M/subsets) .. floor((j+1)*M/subsets)``.
    """
    if N % subsets:
        raise ValueError(f"subsets={subsets} must divide N={N}")
    if M < subsets:
        raise ValueError(f"need at least one row per subset: M={M} < subsets={subsets}")
    if M > N:
        raise ValueError(f"need M <= N, got M={M}, N={N}")
    g = _gen(rng)
    if noise_var is None:
        noise_var = 1.0 / M
    width = N // subsets
    A = np.zeros((M, N))
    bounds = [(j * M) // subsets for j in range(subsets + 1)]
    block = 1.0 + np.sqrt(block_var) * g.standard_normal((M, N))
    for j in range(subsets):
        r0, r1 = bounds[j], bounds[j + 1]
        c0, c1 = j * width, (j + 1) * width
        A[r0:r1, c0:c1] = block[r0:r1, c0:c1]
    A = A + np.sqrt(noise_var) * g.standard_normal((M, N))
    return normalize_columns(A) if normalize else A


def filter_downsample_1d(kernel, N, shift=2):
    """Rows are circular shifts of ``kernel``; row ``i`` is centered on column ``shift*i``."""
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 1 or kernel.size % 2 == 0:
        raise ValueError("kernel length must be odd")
    if shift < 1 or N % shift:
        raise ValueError(f"shift={shift} must be >= 1 and divide N={N}")
    half = kernel.size // 2
    rows = N // shift
    A = np.zeros((rows, N))
    offsets = np.arange(-half, half + 1)
    for i in range(rows):
        # np.add.at so kernels longer than N wrap onto themselves correctly
        np.add.at(A[i], (shift * i + offsets) % N, kernel)
    return A


def blur_operator_2d(side, kernel):
    """Matrix of 2D circular convolution on row-major vectorized side x side images."""
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise ValueError("kernel must be square with odd size")
    if side < kernel.shape[0]:
        raise ValueError(f"side={side} smaller than kernel")
    half = kernel.shape[0] // 2
    n = side * side
    H = np.zeros((n, n))
    rr, cc = np.divmod(np.arange(n), side)
    for a in range(-half, half + 1):
        for b in range(-half, half + 1):
            w = kernel[a + half, b + half]
            if w == 0:
                continue
            cols = ((rr + a) % side) * side + (cc + b) % side
            H[np.arange(n), cols] += w
    return H


def sampling_operator(pattern, side):
    """Pixel-selection matrix for the tiled mask, rows in row-major mask order."""
    if side != 4 * pattern.replication:
        raise ValueError(f"side={side} must equal 4 * replication={4 * pattern.replication}")
    picked = np.flatnonzero(pattern.mask().ravel())
    S = np.zeros((picked.size, side * side))
    S[np.arange(picked.size), picked] = 1.0
    return S


def compose_sensing(S, H, Psi):
    S, H, Psi = as_matrix(S, "S"), as_matrix(H, "H"), as_matrix(Psi, "Psi")
    if S.shape[1] != H.shape[0] or H.shape[1] != Psi.shape[0]:
        raise ValueError(f"dimension mismatch: {S.shape} x {H.shape} x {Psi.shape}")
    return S @ (H @ Psi)


def correlation_map(Phi):
    Phi = as_matrix(Phi, "Phi")
    C = np.abs(Phi.T @ Phi)
    # enforce exact symmetry against rounding in the product
    return np.triu(C) + np.triu(C, 1).T


def random_sparse_signal(N, K, rng):
    if not 0 <= K <= N:
        raise ValueError(f"need 0 <= K <= N, got K={K}, N={N}")
    g = _gen(rng)
    support = np.sort(g.choice(N, size=K, replace=False))
    values = np.zeros(N)
    values[support] = g.standard_normal(K)
    return SparseSignal(values, support)


def clustered_sparse_signal(N, K, subsets=16, active=4, rng=None, spill=False):
    """Nonzeros spread over ``active`` random column groups, ``K // active`` in each.

    The ``K % active`` leftover entries go into one more group, distinct from
    the active ones.  With ``spill=True``, demand beyond a group's width
    overflows into further random groups instead of raising, which lets the
    ensemble reach any ``K <= N``.
    """
    if N % subsets:
        raise ValueError(f"subsets={subsets} must divide N={N}")
    if not 0 <= K <= N:
        raise ValueError(f"need 0 <= K <= N, got K={K}")
    width = N // subsets
    per, extra = divmod(K, active)
    counts = [per] * active + ([extra] if extra else [])
    if not spill and (per > width or len(counts) > subsets):
        raise ValueError(f"K={K} exceeds capacity of {active} groups of {width} columns (+1 spare)")
    g = _gen(rng)
    values = np.zeros(N)
    if K == 0:
        return SparseSignal(values, np.array([], dtype=int))
    if spill:
        overflow = sum(max(0, n - width) for n in counts)
        counts = [min(n, width) for n in counts]
        while overflow:
            take = min(width, overflow)
            counts.append(take)
            overflow -= take
        if len(counts) > subsets:
            # fold the remainder into partially filled groups
            tail = sum(counts[subsets:])
            counts = counts[:subsets]
            for i in range(subsets):
                add = min(width - counts[i], tail)
                counts[i] += add
                tail -= add
    groups = g.choice(subsets, size=len(counts), replace=False)
    picked = [grp * width + g.choice(width, size=n, replace=False) for grp, n in zip(groups, counts)]
    support = np.sort(np.concatenate(picked))
    values[support] = g.standard_normal(support.size)
    return SparseSignal(values, support)


def save_dmat(path, A):
    """Write ``rows cols`` followed by the row-major entries, one row per line."""
    A = np.atleast_2d(as_matrix(np.atleast_2d(A)))
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n")


def load_dmat(path):
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing 'rows cols' header")
    rows, cols = int(tokens[0]), int(tokens[1])
    data = np.array([float(t) for t in tokens[2:]])
    if data.size != rows * cols:
        raise ValueError(f"{path}: header says {rows}x{cols} but found {data.size} values")
    return as_matrix(data.reshape(rows, cols), str(path))
