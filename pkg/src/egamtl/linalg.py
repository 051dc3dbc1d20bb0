"""Small dense matrix routines: Gram matrices, a Jacobi eigensolver and the
orthogonal projection used to align task gradients.

Everything here works on plain ``numpy`` float64 arrays. Task counts are
tiny (a handful of rows), so the eigensolver favours clarity over speed.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DegenerateGradientError, InvalidInputError, NumericalFailureError

SYMMETRY_TOL = 1e-9
OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100
RELATIVE_RANK_TOL = 1e-8


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # (n,), descending
    eigenvectors: np.ndarray  # (n, n), column j pairs with eigenvalues[j]


class Alignment(NamedTuple):
    g_tilde: np.ndarray
    sigma_min: float
    rank: int


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite, non-empty 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return arr


def gram(G) -> np.ndarray:
    """Return ``G @ G.T``, symmetrised so that it is exactly symmetric."""
    G = as_matrix(G, "G")
    A = G @ G.T
    return 0.5 * (A + A.T)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive (first one on ties)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def jacobi_eigh(A) -> EigenDecomposition:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all off-diagonal pairs until every off-diagonal magnitude
    drops below ``1e-12 * ||A||_F`` or 100 sweeps have run.

    Raises
    ------
    InvalidInputError
        If ``A`` is not square or not symmetric within 1e-9.
    NumericalFailureError
        If the sweep limit is reached first.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise InvalidInputError(f"A must be square, got shape {A.shape}")
    asym = float(np.max(np.abs(A - A.T)))
    if asym > SYMMETRY_TOL:
        raise InvalidInputError(f"A is not symmetric (max |A_ij - A_ji| = {asym:.3e})")

    a = 0.5 * (A + A.T)
    V = np.eye(n)
    threshold = OFFDIAG_TOL * float(np.linalg.norm(a))
    off_mask = ~np.eye(n, dtype=bool)

    def residual() -> float:
        return float(np.max(np.abs(a[off_mask]))) if n > 1 else 0.0

    for _ in range(MAX_SWEEPS):
        if residual() <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                g = 100.0 * abs(apq)
                if abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q]):
                    # below rounding of both diagonals: rotation would be the identity
                    a[p, q] = a[q, p] = 0.0
                    continue
                h = a[q, q] - a[p, p]
                if abs(h) + g == abs(h):
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                v_p = V[:, p].copy()
                v_q = V[:, q].copy()
                V[:, p] = c * v_p - s * v_q
                V[:, q] = s * v_p + c * v_q
    else:
        res = residual()
        if res > threshold:
            raise NumericalFailureError(
                f"Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps", res
            )

    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return EigenDecomposition(lam[order], _fix_signs(V[:, order]))


def project_align(G, rank_tol: float | None = None) -> Alignment:
    """Project the rows of ``G`` onto an orthogonal set with equal norms.

    Computes ``sigma * U diag(1/s) U^T G`` from the eigendecomposition of the
    Gram matrix ``G G^T = U diag(s**2) U^T``. Only singular values above
    ``rank_tol`` are kept; the others are dropped from the reconstruction.
    ``sigma`` is the smallest *retained* singular value. With ``rank_tol=None``
    the threshold is ``1e-8 * max(s)``.

    Returns an ``Alignment(g_tilde, sigma_min, rank)``.

    Raises
    ------
    DegenerateGradientError
        When no singular value exceeds ``rank_tol`` (e.g. an all-zero ``G``).
    """
    G = as_matrix(G, "G")
    n, m = G.shape
    if n > m:
        raise InvalidInputError(f"need n <= m, got G of shape {G.shape}")
    eig = jacobi_eigh(gram(G))
    s = np.sqrt(np.clip(eig.eigenvalues, 0.0, None))
    if rank_tol is None:
        rank_tol = RELATIVE_RANK_TOL * float(s[0])
    if rank_tol < 0:
        raise InvalidInputError(f"rank_tol must be >= 0, got {rank_tol}")
    keep = s > rank_tol
    if not np.any(keep):
        raise DegenerateGradientError(
            f"all singular values <= rank_tol={rank_tol:.3e}; gradient is numerically zero"
        )
    U = eig.eigenvectors[:, keep]
    s_kept = s[keep]
    sigma_min = float(s_kept.min())
    g_tilde = sigma_min * (U @ ((U.T @ G) / s_kept[:, None]))
    return Alignment(g_tilde, sigma_min, int(keep.sum()))
