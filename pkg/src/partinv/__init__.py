"""Partial Inversion (PartInv) sparse recovery for coherent sensing matrices."""
from .linalg import least_squares, svd
from .recovery import (
    PartInvOptions,
    RecoveryResult,
    Termination,
    cosamp,
    partinv,
    partinv_wavelet,
    select_top,
    success,
)
from .sensing import RngStream, SparseSignal, gaussian_matrix, random_sparse_signal

__version__ = "0.1.0"

__all__ = [
    "PartInvOptions",
    "RecoveryResult",
    "RngStream",
    "SparseSignal",
    "Termination",
    "cosamp",
    "gaussian_matrix",
    "least_squares",
    "partinv",
    "partinv_wavelet",
    "random_sparse_signal",
    "select_top",
    "success",
    "svd",
]
