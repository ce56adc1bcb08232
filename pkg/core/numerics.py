"""
RIS Link Simulator - Complex Linear Algebra
Dense complex matrix primitives and the thin SVD used by the precoder design.

Matrices are plain ``numpy`` complex128 arrays. Every function accepts a
single matrix or a stack of matrices on leading axes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonFiniteError


def as_cmatrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite complex128 array with at least two dimensions."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim < 2:
        raise DimensionError(f"{name} must be at least 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``A = U diag(sigma) V^H``.

    For an ``r x c`` matrix, ``U`` is ``r x n``, ``V`` is ``c x n`` and
    ``sigma`` has ``n = min(r, c)`` entries sorted non-increasing.
    """
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma[..., None, :]) @ hermitian(self.V)

    @property
    def rank_dim(self) -> int:
        return self.sigma.shape[-1]


def matmul(a, b) -> np.ndarray:
    """Exact complex product ``A B``. No conjugation is applied."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul dimension mismatch: {a.shape[-2]}x{a.shape[-1]} times "
            f"{b.shape[-2]}x{b.shape[-1]}"
        )
    return a @ b


def hermitian(a) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    a = np.asarray(a)
    return np.conj(np.swapaxes(a, -1, -2))


def svd(a) -> SvdFactors:
    """Thin singular value decomposition.

    LAPACK's divide-and-conquer driver through ``numpy.linalg.svd``; the
    matrices here are at most a few hundred rows, so robustness wins over
    a hand-written Jacobi sweep.
    """
    arr = as_cmatrix(a, "svd input")
    if arr.shape[-1] < 1 or arr.shape[-2] < 1:
        raise DimensionError(f"svd input must be non-empty, got shape {arr.shape}")
    u, s, vh = np.linalg.svd(arr, full_matrices=False)
    return SvdFactors(U=u, sigma=s, V=hermitian(vh))


def frobenius_norm(a) -> float:
    """Square root of the sum of squared magnitudes over the last two axes."""
    arr = np.asarray(a, dtype=np.complex128)
    return np.sqrt(np.sum(np.abs(arr) ** 2, axis=(-2, -1)))


def is_semi_unitary(u, tol: float = 1e-10) -> bool:
    """``U^H U == I`` within ``tol`` (entrywise)."""
    u = np.asarray(u)
    gram = hermitian(u) @ u
    eye = np.eye(u.shape[-1])
    return bool(np.max(np.abs(gram - eye)) <= tol)
