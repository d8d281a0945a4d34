"""Small dense symmetric-matrix kernel used by the filter, model, and bound code.

Everything operates on plain numpy arrays.  Scalar entry points (max_eigenvalue,
sym_spectral_abscissa, ...) validate a single matrix; the *_stack helpers accept
leading batch dimensions and are what the trial engine calls in its inner loop.

Conventions:
  * matrices are at most MAX_DIM x MAX_DIM,
  * eigenvalues in [-EIG_ZERO_BAND, 0) are treated as exact zeros,
  * symmetry is accepted up to SYM_TOL (relative, inf-norm) and then enforced
    exactly by averaging with the transpose.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, InvalidArgument, InvalidMatrix, NotPD, NotPSD

MAX_DIM = 64
EIG_ZERO_BAND = 1e-10
SYM_TOL = 1e-9


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Validate a 1-d real array and return it as float64."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise InvalidMatrix(f"expected a vector, got ndim={v.ndim}")
    if not np.all(np.isfinite(v)):
        raise InvalidMatrix("vector has non-finite entries")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"expected length {dim}, got {v.shape[0]}")
    return v


def as_square(M, dim: int | None = None) -> np.ndarray:
    """Validate a square 2-d real array and return it as float64."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix("matrix has non-finite entries")
    if A.shape[0] > MAX_DIM:
        raise InvalidArgument(f"dimension {A.shape[0]} exceeds the supported maximum {MAX_DIM}")
    if dim is not None and A.shape[0] != dim:
        raise DimensionMismatch(f"expected {dim}x{dim}, got {A.shape[0]}x{A.shape[1]}")
    return A


def as_symmetric(M, dim: int | None = None) -> np.ndarray:
    """Validate near-symmetry and return the exactly symmetrized matrix.

    Asymmetry beyond SYM_TOL * max(1, |M|_inf) is treated as a bug in the
    caller, not something to silently average away.
    """
    A = as_square(M, dim)
    skew = np.abs(A - A.T).max(initial=0.0)
    scale = max(1.0, np.abs(A).max(initial=0.0))
    if skew > SYM_TOL * scale:
        raise InvalidMatrix(f"matrix is not symmetric: |M - M^T|_inf = {skew:.3e}")
    return 0.5 * (A + A.T)


def max_eigenvalue(M) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    A = as_symmetric(M)
    return float(np.linalg.eigvalsh(A)[-1])


def min_eigenvalue(M) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    A = as_symmetric(M)
    return float(np.linalg.eigvalsh(A)[0])


def sym_spectral_abscissa(M) -> float:
    """Largest eigenvalue of M + M^T for a general square matrix.

    Note the convention: no factor 1/2, so for M = -a*I the result is -2a.
    """
    A = as_square(M)
    return float(np.linalg.eigvalsh(A + A.T)[-1])


def frobenius_inner(A, B) -> float:
    """Frobenius inner product sum_ij A_ij B_ij."""
    X = np.asarray(A, dtype=float)
    Y = np.asarray(B, dtype=float)
    if X.shape != Y.shape:
        raise DimensionMismatch(f"shape mismatch {X.shape} vs {Y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise InvalidMatrix("non-finite entries")
    return float(np.sum(X * Y))


def psd_project(M) -> np.ndarray:
    """Nearest positive semi-definite matrix in Frobenius norm.

    Symmetrizes, then clips negative eigenvalues at zero.  This is the exact
    Frobenius-nearest PSD point for a symmetric input.
    """
    A = as_symmetric(M)
    return psd_project_stack(A[np.newaxis])[0]


def sym_sqrt(M) -> np.ndarray:
    """Symmetric PSD square root.

    Eigenvalues in [-EIG_ZERO_BAND * scale, 0) are flushed to zero; anything
    more negative raises NotPSD.
    """
    A = as_symmetric(M)
    w, V = np.linalg.eigh(A)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w[0] < -EIG_ZERO_BAND * scale:
        raise NotPSD(f"matrix has eigenvalue {w[0]:.3e} below the PSD tolerance")
    w = np.clip(w, 0.0, None)
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def sym_sqrt_inv(M) -> np.ndarray:
    """Inverse symmetric square root of a positive definite matrix."""
    A = as_symmetric(M)
    w, V = np.linalg.eigh(A)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w[0] <= EIG_ZERO_BAND * scale:
        raise NotPD(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    R = (V / np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


# ---------------------------------------------------------------------------
# Batched helpers.  Shapes are (..., d, d); used per step by the trial engine,
# so the common all-PSD case must not pay a LAPACK call for d <= 2.
# ---------------------------------------------------------------------------


def symmetrize_stack(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def _min_eig_stack(P: np.ndarray) -> np.ndarray:
    d = P.shape[-1]
    if d == 1:
        return P[..., 0, 0]
    if d == 2:
        a = P[..., 0, 0]
        c = P[..., 1, 1]
        b = P[..., 0, 1]
        mean = 0.5 * (a + c)
        radius = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
        return mean - radius
    return np.linalg.eigvalsh(P)[..., 0]


def psd_project_stack(P: np.ndarray) -> np.ndarray:
    """Clip the eigenvalues of a stack of symmetric matrices at zero.

    Fast path: detect offenders analytically for d <= 2 (and via eigvalsh
    otherwise) and run the eigendecomposition only on the rows that actually
    need fixing.  Non-finite rows pass through untouched; divergence handling
    is the caller's job.
    """
    P = np.ascontiguousarray(P, dtype=float)
    if P.shape[-1] == 1:
        return np.maximum(P, 0.0)
    flat = P.reshape((-1,) + P.shape[-2:])
    finite = np.all(np.isfinite(flat), axis=(1, 2))
    wmin = np.full(flat.shape[0], np.inf)
    if finite.any():
        wmin[finite] = _min_eig_stack(flat[finite])
    bad = finite & (wmin < 0.0)
    if bad.any():
        out = flat.copy()
        w, V = np.linalg.eigh(flat[bad])
        w = np.clip(w, 0.0, None)
        fixed = np.einsum("nij,nj,nkj->nik", V, w, V)
        out[bad] = 0.5 * (fixed + np.swapaxes(fixed, -1, -2))
        return out.reshape(P.shape)
    return P


def opnorm_sym_stack(M: np.ndarray) -> np.ndarray:
    """Spectral (operator 2-) norm of a stack of symmetric matrices."""
    w = np.linalg.eigvalsh(M)
    return np.abs(w).max(axis=-1)
