"""Monte-Carlo sweeps: phase diagrams, L-sensitivity, best-L tables, wavelet trees.

Every trial draws its matrix and signal from separate counter-based streams
keyed by ``(seed, experiment, cell, trial, role)``, so results do not depend
on execution order or on how many worker processes are used.  Different
algorithms and different values of ``L`` see the same instances for a given
seed.
"""
from __future__ import annotations

import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import sensing
from .recovery import PartInvOptions, cosamp, partinv, partinv_wavelet, success
from .sensing import RngStream, SamplingPattern, SAMPLING_PATTERNS
from .wavelet import daubechies5_basis_2d, tree_partition

__all__ = [
    "ENSEMBLES",
    "ALGORITHMS",
    "L_POLICIES",
    "DEFAULT_GRID",
    "CSV_HEADER",
    "ConfigError",
    "SweepConfig",
    "CellResult",
    "SweepGrid",
    "worker_count",
    "phase_diagram",
    "l_sensitivity",
    "best_l_search",
    "wavelet_experiment",
    "render_heatmap",
    "read_pgm",
]

ENSEMBLES = {"gaussian": 1, "correlated-block": 2, "wavelet-tree": 3}
ALGORITHMS = ("partinv", "cosamp", "partinv-wavelet")
L_POLICIES = ("equal-K", "max-K-0.8M", "explicit")
DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
WAVELET_SIDE = 32
TREE_SIZE = 21
CSV_HEADER = "delta,rho,M,K,L,trials,successes,mean_iters,mean_residual,skipped"

# role ids inside a trial's stream
_MATRIX, _SIGNAL = 0, 1
# experiment ids
_PHASE, _LSENS = 0, 1


class ConfigError(ValueError):
    """Invalid sweep configuration."""


@dataclass(frozen=True)
class SweepConfig:
    """Parameters of a sweep.

    For ``ensemble="wavelet-tree"`` the ``deltas`` must be sampling-pattern rates
    (multiples of 2/16) and ``trees`` lists the number of active trees per
    cell; ``rhos`` is ignored.  ``l_values`` is used with
    ``l_policy="explicit"`` (one value for phase diagrams, the candidate set
    for :func:`best_l_search`).
    """

    ensemble: str = "gaussian"
    N: int = 256
    deltas: tuple = DEFAULT_GRID
    rhos: tuple = DEFAULT_GRID
    trials: int = 25
    algorithm: str = "partinv"
    l_policy: str = "equal-K"
    l_values: tuple = ()
    trees: tuple = ()
    seed: int = 0
    subsets: int = 16

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        object.__setattr__(self, "rhos", tuple(float(r) for r in self.rhos))
        object.__setattr__(self, "l_values", tuple(int(v) for v in self.l_values))
        object.__setattr__(self, "trees", tuple(int(v) for v in self.trees))
        self.validate()

    def validate(self):
        if self.ensemble not in ENSEMBLES:
            raise ConfigError(f"unknown ensemble {self.ensemble!r}; choose from {sorted(ENSEMBLES)}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.l_policy not in L_POLICIES:
            raise ConfigError(f"unknown L policy {self.l_policy!r}; choose from {L_POLICIES}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.deltas:
            raise ConfigError("delta grid is empty")
        if any(not 0 < d < 1 for d in self.deltas):
            raise ConfigError("delta values must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.l_policy == "explicit" and not self.l_values:
            raise ConfigError("l_policy=explicit needs l_values")
        if self.ensemble == "wavelet-tree":
            if self.N != WAVELET_SIDE**2:
                raise ConfigError(f"wavelet-tree ensemble needs N = {WAVELET_SIDE**2}")
            for d in self.deltas:
                if _rate_ones(d) not in SAMPLING_PATTERNS:
                    raise ConfigError(f"delta={d} is not one of the sampling-pattern rates 2/16..14/16")
            if any(t < 1 for t in self.trees):
                raise ConfigError("tree counts must be >= 1")
        else:
            if not self.rhos:
                raise ConfigError("rho grid is empty")
            if any(not 0 < r < 1 for r in self.rhos):
                raise ConfigError("rho values must lie in (0, 1)")
            if self.algorithm == "partinv-wavelet":
                raise ConfigError("partinv-wavelet needs the wavelet-tree ensemble")
            if self.ensemble == "correlated-block" and self.N % self.subsets:
                raise ConfigError(f"subsets={self.subsets} must divide N={self.N}")

    def l_for(self, M, K):
        if self.l_policy == "equal-K":
            return K
        if self.l_policy == "max-K-0.8M":
            return max(K, int(np.floor(0.8 * M)))
        return self.l_values[0]

    def rows(self):
        """Second grid axis: rho values, or tree counts for the wavelet ensemble."""
        return self.trees if self.ensemble == "wavelet-tree" else self.rhos


@dataclass(frozen=True)
class CellResult:
    delta: float
    rho: float
    M: int
    K: int
    L: int
    trials: int
    successes: int
    mean_iters: float
    mean_residual: float
    skipped: bool = False

    @property
    def proportion(self):
        return self.successes / self.trials if self.trials else 0.0

    def csv_row(self):
        return (
            f"{float(self.delta)!r},{float(self.rho)!r},{self.M},{self.K},{self.L},{self.trials},{self.successes},"
            f"{self.mean_iters:.4f},{self.mean_residual:.6e},{'skipped' if self.skipped else ''}"
        )


@dataclass(frozen=True)
class SweepGrid:
    """Cells in row-major order over ``(delta index, row index)``."""

    config: SweepConfig
    cells: tuple
    shape: tuple
    metadata: dict = field(default_factory=dict)

    def cell(self, i_delta, i_row):
        return self.cells[i_delta * self.shape[1] + i_row]

    def proportions(self):
        """Success proportions as an array indexed ``[delta, row]``; skipped cells are NaN."""
        out = np.full(self.shape, np.nan)
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                c = self.cell(i, j)
                if not c.skipped:
                    out[i, j] = c.proportion
        return out

    def to_csv(self):
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}={value}\n")
        buf.write(CSV_HEADER + "\n")
        for c in self.cells:
            buf.write(c.csv_row() + "\n")
        return buf.getvalue()

    def write_csv(self, path):
        try:
            Path(path).write_text(self.to_csv())
        except OSError as exc:
            raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def worker_count(threads=None):
    """Resolve the worker count: explicit value, else ``PARTINV_THREADS``, 0 meaning all CPUs."""
    if threads is None:
        raw = os.environ.get("PARTINV_THREADS", "0").strip() or "0"
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigError(f"PARTINV_THREADS must be an integer, got {raw!r}") from None
    if threads < 0:
        raise ConfigError("thread count must be >= 0")
    return threads or os.cpu_count() or 1


def _run_units(fn, units, threads):
    n = worker_count(threads)
    if n == 1 or len(units) <= 1:
        with threadpool_limits(limits=1):
            return [fn(*u) for u in units]
    with ProcessPoolExecutor(max_workers=min(n, len(units)), initializer=_worker_init) as pool:
        return list(pool.map(fn, *zip(*units)))


def _worker_init():
    threadpool_limits(limits=1)


def _rate_ones(delta):
    return int(round(16 * delta))


def grid_dims(N, delta, rho):
    """``M = round(delta N)`` and ``K = max(1, round(rho M))``."""
    M = int(round(delta * N))
    K = max(1, int(round(rho * M)))
    return M, K


@lru_cache(maxsize=2)
def _wavelet_operator():
    from .sensing import blur_operator_2d, default_blur_kernel

    H = blur_operator_2d(WAVELET_SIDE, default_blur_kernel())
    return H @ daubechies5_basis_2d(WAVELET_SIDE, 5)


@lru_cache(maxsize=8)
def wavelet_sensing_matrix(ones):
    """``S H Psi`` for the sampling pattern with ``ones`` samples per 4x4 tile."""
    S = sensing.sampling_operator(SamplingPattern(SAMPLING_PATTERNS[ones]), WAVELET_SIDE)
    Phi = S @ _wavelet_operator()
    Phi.setflags(write=False)
    return Phi


def _draw_instance(cfg, M, K, stream):
    if cfg.ensemble == "gaussian":
        Phi = sensing.gaussian_matrix(M, cfg.N, stream.child(_MATRIX))
        c = sensing.random_sparse_signal(cfg.N, K, stream.child(_SIGNAL))
    else:
        Phi = sensing.correlated_block_matrix(M, cfg.N, cfg.subsets, stream.child(_MATRIX))
        c = sensing.clustered_sparse_signal(cfg.N, K, cfg.subsets, 4, stream.child(_SIGNAL), spill=True)
    return Phi, c


def _recover(algorithm, Phi, y, K, L, partition=None):
    if algorithm == "partinv":
        return partinv(Phi, y, K, PartInvOptions(L=L))
    if algorithm == "cosamp":
        return cosamp(Phi, y, K)
    return partinv_wavelet(Phi, y, K, partition, PartInvOptions(L=L))


def _tally(delta, rho, M, K, L, outcomes):
    n = len(outcomes)
    return CellResult(
        delta, rho, M, K, L, n,
        sum(ok for ok, _, _ in outcomes),
        float(np.mean([it for _, it, _ in outcomes])),
        float(np.mean([res for _, _, res in outcomes])),
    )


def _skipped(delta, rho, M, K, L):
    return CellResult(delta, rho, M, K, L, 0, 0, 0.0, 0.0, True)


def _feasible(cfg, M, K, L):
    if M < 1 or K < 1 or K > M:
        return False
    if cfg.algorithm == "cosamp":
        return True
    return K <= L < M


def _trial_matrix_cell(cfg, M, K, L, key):
    """Run ``cfg.trials`` trials of one (M, K, L) cell of a matrix ensemble."""
    base = RngStream(cfg.seed, key)
    outcomes = []
    for t in range(cfg.trials):
        Phi, c = _draw_instance(cfg, M, K, base.child(t))
        y = Phi @ c.values
        res = _recover(cfg.algorithm, Phi, y, K, L)
        outcomes.append((success(c, res.estimate), res.iterations, res.residual_norm))
    return outcomes


def _phase_cell(cfg, i, j):
    code = ENSEMBLES[cfg.ensemble]
    delta = cfg.deltas[i]
    if cfg.ensemble == "wavelet-tree":
        return _wavelet_cell(cfg, i, j)
    rho = cfg.rhos[j]
    M, K = grid_dims(cfg.N, delta, rho)
    L = cfg.l_for(M, K) if cfg.algorithm != "cosamp" else K
    if not _feasible(cfg, M, K, L) or (cfg.ensemble == "correlated-block" and M < cfg.subsets):
        return _skipped(delta, rho, M, K, L)
    outcomes = _trial_matrix_cell(cfg, M, K, L, (_PHASE, code, i, j))
    return _tally(delta, rho, M, K, L, outcomes)


def _wavelet_cell(cfg, i, j):
    delta = cfg.deltas[i]
    ones = _rate_ones(delta)
    Phi = wavelet_sensing_matrix(ones)
    partition = tree_partition(WAVELET_SIDE, 5)
    tree_ids = partition.tree_indices()
    n_trees = cfg.trees[j]
    M, N = Phi.shape
    K = TREE_SIZE * n_trees
    L = cfg.l_for(M, K) if cfg.algorithm != "cosamp" else K
    rho = K / M
    if n_trees > len(tree_ids) or not (K < M and (cfg.algorithm == "cosamp" or K <= L < M)):
        return _skipped(delta, rho, M, K, L)
    base = RngStream(cfg.seed, (_PHASE, ENSEMBLES["wavelet-tree"], i, j))
    outcomes = []
    for t in range(cfg.trials):
        g = base.child(t, _SIGNAL).generator()
        chosen = g.choice(tree_ids, size=n_trees, replace=False)
        support = np.sort(np.concatenate([partition.sets[k] for k in chosen]))
        values = np.zeros(N)
        values[support] = g.standard_normal(support.size)
        res = _recover(cfg.algorithm, Phi, Phi @ values, K, L, partition)
        outcomes.append((success(values, res.estimate), res.iterations, res.residual_norm))
    return _tally(delta, rho, M, K, L, outcomes)


def _grid(cfg, threads, metadata):
    rows = cfg.rows()
    units = [(cfg, i, j) for i in range(len(cfg.deltas)) for j in range(len(rows))]
    cells = _run_units(_phase_cell, units, threads)
    return SweepGrid(cfg, tuple(cells), (len(cfg.deltas), len(rows)), metadata)


def _metadata(cfg, kind):
    meta = {
        "kind": kind,
        "ensemble": cfg.ensemble,
        "algorithm": cfg.algorithm,
        "N": cfg.N,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "l_policy": cfg.l_policy,
    }
    if cfg.l_policy == "explicit":
        meta["l_values"] = " ".join(map(str, cfg.l_values))
    return meta


def phase_diagram(cfg, threads=None):
    """Success counts over the (delta, rho) grid of ``cfg``."""
    if cfg.l_policy == "explicit" and len(cfg.l_values) != 1:
        raise ConfigError("phase diagrams take exactly one explicit L value")
    meta = _metadata(cfg, "phase-diagram")
    if cfg.ensemble == "wavelet-tree":
        meta["K_grid"] = "trees*21 for trees in " + " ".join(map(str, cfg.trees))
    return _grid(cfg, threads, meta)


def wavelet_experiment(deltas=(2 / 16, 4 / 16, 6 / 16, 8 / 16, 10 / 16, 12 / 16, 14 / 16), trees=None,
                       trials=100, seed=0, algorithm="partinv-wavelet", threads=None):
    """Tree-sparse recovery with ``Phi = S H Psi`` over sampling rates and tree counts.

    ``trees=None`` uses every count from 1 to ``floor(M / 21)`` (capped at 48)
    for the smallest rate in ``deltas``.
    """
    if trees is None:
        M_min = int(round(min(deltas) * WAVELET_SIDE**2))
        trees = tuple(range(1, min(M_min // TREE_SIZE, 48) + 1)) or (1,)
    cfg = SweepConfig(
        ensemble="wavelet-tree", N=WAVELET_SIDE**2, deltas=tuple(deltas), trees=tuple(trees),
        trials=trials, algorithm=algorithm, seed=seed,
    )
    return phase_diagram(cfg, threads)


def _lsens_unit(cfg, M, K, L):
    code = ENSEMBLES[cfg.ensemble]
    outcomes = _trial_matrix_cell(cfg, M, K, L, (_LSENS, code, M, K))
    return _tally(M / cfg.N, K / M, M, K, L, outcomes)


def l_sensitivity(M, K, ensemble="gaussian", trials=25, seed=0, N=256, L_values=None, threads=None):
    """Success proportion of PartInv for ``L = K, K+2, ..., floor(0.8 M)``.

    Every ``L`` is run on the same ``trials`` instances.
    """
    if ensemble not in ("gaussian", "correlated-block"):
        raise ConfigError("l_sensitivity supports the gaussian and correlated-block ensembles")
    L_top = int(np.floor(0.8 * M))
    if L_values is None:
        if K > L_top:
            raise ConfigError(f"need K <= 0.8 M, got K={K}, M={M}")
        L_values = tuple(range(K, L_top + 1, 2))
    if any(not K <= L < M for L in L_values):
        raise ConfigError("every L must satisfy K <= L < M")
    cfg = SweepConfig(ensemble=ensemble, N=N, deltas=(M / N,), rhos=(K / M,), trials=trials, seed=seed)
    cells = _run_units(_lsens_unit, [(cfg, M, K, L) for L in L_values], threads)
    meta = _metadata(cfg, "l-sensitivity")
    return SweepGrid(cfg, tuple(cells), (1, len(cells)), meta)


@dataclass(frozen=True)
class BestLResult:
    grid: SweepGrid  # per cell: L = best L (0 if no successes), successes at that L
    curves: dict     # (i_delta, i_rho) -> list of (L, successes)

    def table(self):
        """Best L per cell as an int array indexed ``[rho, delta]`` with rho decreasing down the rows."""
        n_d, n_r = self.grid.shape
        out = np.zeros((n_r, n_d), dtype=int)
        for i in range(n_d):
            for j in range(n_r):
                out[n_r - 1 - j, i] = self.grid.cell(i, j).L
        return out


def _best_l_cell(cfg, i, j):
    delta, rho = cfg.deltas[i], cfg.rhos[j]
    M, K = grid_dims(cfg.N, delta, rho)
    if cfg.l_policy == "explicit":
        candidates = [L for L in cfg.l_values if K <= L < M]
    else:
        candidates = list(range(K, M, 2))
    if K > M or not candidates or (cfg.ensemble == "correlated-block" and M < cfg.subsets):
        return _skipped(delta, rho, M, K, 0), []
    code = ENSEMBLES[cfg.ensemble]
    curve = []
    best = None
    for L in candidates:
        outcomes = _trial_matrix_cell(replace(cfg, algorithm="partinv"), M, K, L, (_LSENS, code, M, K))
        cell = _tally(delta, rho, M, K, L, outcomes)
        curve.append((L, cell.successes))
        # strict comparison keeps the smallest L among ties
        if best is None or cell.successes > best.successes:
            best = cell
    if best.successes == 0:
        best = replace(best, L=0)
    return best, curve


def best_l_search(cfg, threads=None):
    """For each (delta, rho) cell, the ``L`` in ``K, K+2, ..., <= M-1`` with the most successes.

    Ties go to the smallest ``L``; cells where no ``L`` succeeds report ``L = 0``.
    """
    if cfg.ensemble == "wavelet-tree":
        raise ConfigError("best-L search runs on the gaussian and correlated-block ensembles")
    units = [(cfg, i, j) for i in range(len(cfg.deltas)) for j in range(len(cfg.rhos))]
    results = _run_units(_best_l_cell, units, threads)
    cells = tuple(r[0] for r in results)
    curves = {(u[1], u[2]): r[1] for u, r in zip(units, results)}
    grid = SweepGrid(cfg, cells, (len(cfg.deltas), len(cfg.rhos)), _metadata(cfg, "best-l"))
    return BestLResult(grid, curves)


def heatmap_pixels(grid):
    """Gray levels with delta increasing rightward and the row axis increasing upward."""
    props = grid.proportions()
    n_d, n_r = props.shape
    img = np.zeros((n_r, n_d), dtype=np.uint8)
    for i in range(n_d):
        for j in range(n_r):
            p = props[i, j]
            img[n_r - 1 - j, i] = 0 if np.isnan(p) else int(np.floor(255 * p + 0.5))
    return img


def render_heatmap(grid, path):
    """Write the success proportions as a binary PGM, one pixel per cell."""
    if not grid.cells:
        raise ValueError("grid is empty")
    try:
        write_pgm(path, heatmap_pixels(grid))
    except OSError as exc:
        raise OSError(f"cannot write heatmap to {path}: {exc}") from exc


def write_pgm(path, img):
    img = np.asarray(img, dtype=np.uint8)
    header = f"P5 {img.shape[1]} {img.shape[0]} 255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())


def read_pgm(path):
    """Read a binary PGM written by :func:`render_heatmap`."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pixels = data[-width * height:]
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)


def config_dict(cfg):
    return asdict(cfg)
