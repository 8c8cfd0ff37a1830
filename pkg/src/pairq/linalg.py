"""Dense linear algebra used by the quantizers and transforms.

Everything here works on float64 arrays and never mutates its inputs. The
four public operations are a symmetric eigendecomposition with a fixed
ordering contract, a PSD matrix square root, a Moore-Penrose pseudoinverse
with an explicit singular-value cutoff, and the orthogonal Procrustes solve.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Relative tolerance for the symmetry check in sym_eig.
SYMMETRY_RTOL = 1e-10

# Eigenvalue handling in psd_sqrt, both relative to the largest eigenvalue:
# anything below -NEGATIVE_EIG_RTOL errors out as not PSD, anything below
# ZERO_EIG_RTOL is clamped to exactly zero before the square root.
NEGATIVE_EIG_RTOL = 1e-6
ZERO_EIG_RTOL = 1e-10

# Singular values at or below this fraction of the largest are treated as
# zero when inverting.
PINV_CUTOFF_RTOL = 1e-10


class SymEig(NamedTuple):
    """Eigendecomposition of a symmetric matrix.

    ``eigenvalues`` are sorted in descending order and ``eigenvectors``
    holds the matching orthonormal eigenvectors as columns, so that
    ``eigenvectors @ np.diag(eigenvalues) @ eigenvectors.T`` rebuilds the
    input.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a 2-d float64 array, rejecting non-finite entries."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {out.shape}")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains NaN or infinite entries")
    return out


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce ``a`` to a 1-d float64 array, rejecting non-finite entries."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {out.shape}")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains NaN or infinite entries")
    return out


def sym_eig(a) -> SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Args:
        a: square symmetric matrix (symmetry checked up to a small relative
            tolerance; the strictly symmetric average is what gets
            decomposed).

    Returns:
        SymEig with descending eigenvalues and orthonormal eigenvector
        columns in matching order.

    Raises:
        ValueError: if ``a`` is not square or not symmetric.
    """
    a = as_matrix(a, "a")
    n, m = a.shape
    if n != m:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > SYMMETRY_RTOL * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric")
    # Symmetrize so tiny asymmetries cannot leak into the decomposition.
    sym = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(sym)
    order = np.arange(n - 1, -1, -1)
    return SymEig(eigenvalues=w[order], eigenvectors=v[:, order])


def psd_sqrt(g) -> np.ndarray:
    """Symmetric square root C of a PSD matrix, so that C.T @ C == g.

    Eigenvalues slightly below zero (relative magnitude under
    ``NEGATIVE_EIG_RTOL``) are treated as numerical noise and clamped to
    zero, along with any positive values under ``ZERO_EIG_RTOL`` of the
    largest. A genuinely negative spectrum raises.

    Returns:
        The symmetric PSD root, same shape as ``g``. For the zero matrix
        the result is the zero matrix.
    """
    decomp = sym_eig(g)
    w = decomp.eigenvalues.copy()
    largest = max(w[0], 0.0)
    if largest == 0.0:
        # No positive mass at all: only an exactly-zero spectrum is PSD.
        if w[-1] < 0.0:
            raise ValueError("matrix is not positive semidefinite")
    elif w[-1] < -NEGATIVE_EIG_RTOL * largest:
        raise ValueError(
            "matrix is not positive semidefinite "
            f"(eigenvalue {w[-1]:.3e} vs largest {largest:.3e})"
        )
    w[w < ZERO_EIG_RTOL * largest] = 0.0
    v = decomp.eigenvectors
    root = (v * np.sqrt(w)) @ v.T
    # Exact symmetry keeps downstream C.T @ C == C @ C comparisons clean.
    return 0.5 * (root + root.T)


def pseudo_inverse(c) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``PINV_CUTOFF_RTOL`` times the largest are
    treated as exact zeros, so rank-deficient inputs invert on their row
    space only. The zero matrix maps to the (transposed-shape) zero matrix.
    """
    c = as_matrix(c, "c")
    u, s, vt = np.linalg.svd(c, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((c.shape[1], c.shape[0]))
    keep = s > PINV_CUTOFF_RTOL * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


def procrustes(x, y) -> np.ndarray:
    """Orthogonal matrix R minimizing ||R @ x - y||_F.

    ``x`` and ``y`` are d-by-N matrices of paired columns. The minimizer is
    R = U @ V.T where U, V come from the SVD of y @ x.T.

    Raises:
        ValueError: if the shapes differ or the inputs are not 2-d.
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    u, _, vt = np.linalg.svd(y @ x.T)
    return u @ vt
