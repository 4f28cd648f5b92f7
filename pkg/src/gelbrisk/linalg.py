"""Dense symmetric-matrix primitives: eigendecomposition, PSD square root,
PSD projection.

Everything downstream (distances, closed forms, the conic solver) funnels
through these three operations, so their numerical contracts are pinned
tightly: eigenvalues nondecreasing, eigenvectors orthonormal to 1e-10, and
reconstruction ``V diag(w) V.T == A`` to 1e-8 relative to ``max(1, |A|_max)``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NonFinite, NotPSD

__all__ = ["EigenDecomp", "sym_matrix", "sym_eig", "sqrtm_psd", "psd_project"]

_JACOBI_SWEEPS = 100
_JACOBI_REL_TOL = 1e-12


class EigenDecomp(NamedTuple):
    """Spectral factorization ``A = vectors @ diag(values) @ vectors.T``.

    ``values`` are sorted nondecreasing and ``vectors`` holds the matching
    orthonormal eigenvectors as columns.
    """

    values: np.ndarray
    vectors: np.ndarray


def sym_matrix(a: "np.typing.ArrayLike") -> np.ndarray:
    """Coerce ``a`` to a dense symmetric matrix via ``(A + A.T) / 2``.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Square real matrix, ``n >= 1``.

    Returns
    -------
    ndarray
        Float64 symmetric copy of ``a``.

    Raises
    ------
    DimMismatch
        If ``a`` is not a square 2-D array with ``n >= 1``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        from .errors import DimMismatch

        raise DimMismatch(f"expected a square matrix with n >= 1, got shape {a.shape}")
    return (a + a.T) / 2.0


def _offdiag_fro(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def sym_eig(a: "np.typing.ArrayLike") -> EigenDecomp:
    """Eigendecompose a symmetric matrix with cyclic Jacobi rotations.

    The sweep pattern is row-cyclic over the strict upper triangle; iteration
    stops once the off-diagonal Frobenius norm drops below
    ``1e-12 * |A|_F`` or after 100 sweeps.  Jacobi is slower than LAPACK but
    branch-predictable, dependency-free and accurate to near machine
    precision at the dimensions this package works with (n up to ~200).

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetric real matrix.  Mild asymmetry is symmetrized away first.

    Returns
    -------
    EigenDecomp
        ``values`` nondecreasing, ``vectors`` orthonormal columns.

    Raises
    ------
    NonFinite
        If ``a`` contains NaN or infinity.

    References
    ----------
    Golub & Van Loan, *Matrix Computations*, 4th ed., §8.5.
    """
    a = sym_matrix(a)
    if not np.isfinite(a).all():
        raise NonFinite("matrix contains NaN or infinity")
    n = a.shape[0]
    if n == 1:
        return EigenDecomp(a[0, :1].copy(), np.ones((1, 1)))

    work = a.copy()
    vecs = np.eye(n)
    tol = _JACOBI_REL_TOL * float(np.linalg.norm(a))
    for _ in range(_JACOBI_SWEEPS):
        if _offdiag_fro(work) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = work[p, q]
                if apq == 0.0:
                    continue
                tau = (work[q, q] - work[p, p]) / (2.0 * apq)
                if np.isfinite(tau):
                    t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0.0 else 1.0
                else:  # |a_pq| denormal next to a large diagonal gap
                    t = 1.0 / (2.0 * tau)
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                # A <- G.T A G with the Givens rotation G acting on (p, q)
                col_p = work[:, p].copy()
                col_q = work[:, q].copy()
                work[:, p] = c * col_p - s * col_q
                work[:, q] = s * col_p + c * col_q
                row_p = work[p, :].copy()
                row_q = work[q, :].copy()
                work[p, :] = c * row_p - s * row_q
                work[q, :] = s * row_p + c * row_q
                work[p, q] = work[q, p] = 0.0
                col_p = vecs[:, p].copy()
                col_q = vecs[:, q].copy()
                vecs[:, p] = c * col_p - s * col_q
                vecs[:, q] = s * col_p + c * col_q

    diag = np.diag(work).copy()
    order = np.argsort(diag, kind="stable")
    return EigenDecomp(diag[order], vecs[:, order])


def sqrtm_psd(a: "np.typing.ArrayLike", tol: float | None = None) -> np.ndarray:
    """Symmetric PSD square root ``S`` with ``S @ S == A``.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetric PSD matrix.
    tol : float, optional
        Tolerance for negative eigenvalues.  ``A`` is accepted as long as
        ``min eig >= -tol``; eigenvalues in ``[-tol, 0)`` are rounding noise
        and get clipped to zero before the root.  Defaults to
        ``1e-8 * |A|_max``.

    Returns
    -------
    ndarray
        Symmetric PSD matrix ``S`` satisfying
        ``|S @ S - A|_max <= 1e-7 * max(1, |A|_max)``.

    Raises
    ------
    NotPSD
        If some eigenvalue is below ``-tol``.
    NonFinite
        If ``a`` contains NaN or infinity.
    """
    a = sym_matrix(a)
    if tol is None:
        tol = 1e-8 * float(np.abs(a).max())
    w, v = sym_eig(a)
    if w[0] < -tol:
        raise NotPSD(f"min eigenvalue {w[0]:.3e} below -{tol:.3e}")
    root = np.sqrt(np.clip(w, 0.0, None))
    return sym_matrix((v * root) @ v.T)


def psd_project(a: "np.typing.ArrayLike") -> np.ndarray:
    """Frobenius-nearest PSD matrix, by clipping negative eigenvalues at zero.

    This sits on the conic solver's per-iteration hot path, so the
    eigendecomposition is delegated to LAPACK (``numpy.linalg.eigh``) rather
    than the Jacobi reference solver; the output contract is identical.

    Raises
    ------
    NonFinite
        If ``a`` contains NaN or infinity.
    """
    a = sym_matrix(a)
    if not np.isfinite(a).all():
        raise NonFinite("matrix contains NaN or infinity")
    w, v = np.linalg.eigh(a)
    if w[0] >= 0.0:
        return a
    clipped = np.clip(w, 0.0, None)
    return sym_matrix((v * clipped) @ v.T)
