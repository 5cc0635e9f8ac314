"""Dense linear-algebra primitives used throughout the package.

Matrices are plain 2-D ``float64`` ndarrays (row-major).  Construction-time
validation lives in :func:`as_matrix`; the factorizations are LAPACK-backed
(`numpy.linalg`) with deterministic sign conventions layered on top so that
repeated runs and tests see identical output.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError, InvalidInputError
from .rng import SeededRng


class SvdResult(NamedTuple):
    """Thin SVD ``m = u @ diag(s) @ v.T`` with ``s`` sorted descending."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInputError(f"{name} must be non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


def _fix_signs(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Deterministic gauge: first nonzero entry of each left singular vector >= 0.
    u = u.copy()
    v = v.copy()
    for j in range(u.shape[1]):
        col = u[:, j]
        nz = np.nonzero(np.abs(col) > 1e-304)[0]
        if nz.size and col[nz[0]] < 0:
            u[:, j] = -col
            v[:, j] = -v[:, j]
    return u, v


def svd(m) -> SvdResult:
    """Thin singular value decomposition with a fixed sign convention.

    Returns column-orthonormal ``u`` (m x r), singular values ``s`` sorted
    descending (r = min(m, n)), and column-orthonormal ``v`` (n x r).
    """
    m = as_matrix(m)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    u, v = _fix_signs(u, vt.T)
    return SvdResult(u=u, s=s, v=v)


def qr_orthonormal(m) -> np.ndarray:
    """Orthonormal basis for the column span of ``m`` (rows >= cols required).

    The result Q satisfies ``Q.T @ Q = I`` within 1e-10 * cols and spans the
    same subspace as ``m``.  Signs are fixed so the R factor has a positive
    diagonal.  Rank-deficient input raises :class:`DegenerateInputError`.
    """
    m = as_matrix(m)
    rows, cols = m.shape
    if rows < cols:
        raise InvalidInputError(f"need rows >= cols, got {rows}x{cols}")
    q, r = np.linalg.qr(m)
    diag = np.diag(r)
    scale = np.max(np.abs(m)) * max(rows, cols)
    if np.any(np.abs(diag) <= 1e-12 * max(scale, 1e-300)):
        raise DegenerateInputError(f"rank-deficient input ({rows}x{cols})")
    signs = np.sign(diag)
    return q * signs


def procrustes_distance(u, v) -> float:
    """min over orthogonal R of ||u - v R||_F (rotations and reflections).

    The minimizer is R = Us @ Vs.T where ``v.T @ u = Us S Vs.T``; the metric
    quotients out the rotational gauge freedom of a rank-k factorization.
    """
    u = as_matrix(u, "u")
    v = as_matrix(v, "v")
    if u.shape != v.shape:
        raise InvalidInputError(f"shape mismatch: {u.shape} vs {v.shape}")
    us, _, vs = np.linalg.svd(v.T @ u)
    r = us @ vs
    return float(np.linalg.norm(u - v @ r))


def gaussian_matrix(rows: int, cols: int, std: float, rng: SeededRng) -> np.ndarray:
    """rows x cols matrix with i.i.d. N(0, std^2) entries."""
    if std <= 0:
        raise InvalidInputError(f"std must be positive, got {std}")
    return rng.normal(rows, cols, std)


def frobenius_norm(m) -> float:
    return float(np.linalg.norm(as_matrix(m), "fro"))


def operator_norm(m) -> float:
    """Largest singular value."""
    return float(np.linalg.svd(as_matrix(m), compute_uv=False)[0])
