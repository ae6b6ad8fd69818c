"""Matrix factorisations shared by the matching pipeline.

Orthonormal bases are plain ``(d, k)`` float arrays whose columns are
orthonormal; ``k`` may be zero (an empty basis).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import linalg as sla

__all__ = [
    "SingularAlignment",
    "RankDeficientError",
    "rank_tolerance",
    "householder_qr",
    "orthonormalize",
    "extend_basis",
    "reverse_projection",
    "nullspace_basis",
    "paired_alignment",
    "principal_angles",
    "is_orthonormal",
]


class RankDeficientError(np.linalg.LinAlgError):
    """Raised when a matrix that must have full row rank does not."""


class SingularAlignment(NamedTuple):
    """SVD of ``B_a.T @ B_b``.

    ``left`` holds coefficient vectors in the span of ``B_a`` (columns
    ``u_i``), ``right`` the matching vectors for ``B_b`` (columns ``v_i``),
    and ``values`` the cosines of the principal angles, largest first.
    """

    left: np.ndarray
    values: np.ndarray
    right: np.ndarray


def rank_tolerance(shape: tuple[int, int], sigma_max: float) -> float:
    """Singular values at or below this are treated as zero."""
    return max(shape) * np.finfo(float).eps * sigma_max


def is_orthonormal(B: np.ndarray, atol: float = 1e-10) -> bool:
    B = np.asarray(B)
    return bool(np.allclose(B.T @ B, np.eye(B.shape[1]), rtol=0, atol=atol))


def householder_qr(A, tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Column-ordered Householder QR that skips linearly dependent columns.

    Columns are processed left to right.  A column whose component
    orthogonal to the columns accepted so far has norm ``<= tol`` is
    dropped.  Returns ``(Q, kept)`` where ``Q`` is ``(d, r)`` with
    orthonormal columns and ``kept`` the indices of the accepted input
    columns, so that ``span(Q[:, :i+1]) == span(A[:, kept[:i+1]])``.

    ``tol`` defaults to ``1e-10`` times the largest column norm.
    """
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2:
        raise ValueError("expected a 2-D array")
    d, k = A.shape
    if tol is None:
        norms = np.linalg.norm(A, axis=0) if k else np.zeros(0)
        tol = 1e-10 * (norms.max() if k else 0.0)

    reflectors: list[tuple[int, np.ndarray]] = []
    kept: list[int] = []
    signs: list[float] = []
    r = 0
    for j in range(k):
        if r == d:
            break
        x = A[r:, j]
        alpha = np.linalg.norm(x)
        if alpha <= tol:
            continue
        # reflect x onto -sign(x0) * alpha * e_1 to avoid cancellation
        sign = 1.0 if x[0] >= 0 else -1.0
        v = x.copy()
        v[0] += sign * alpha
        v /= np.linalg.norm(v)
        trailing = A[r:, j:]
        trailing -= 2.0 * np.outer(v, v @ trailing)
        reflectors.append((r, v))
        kept.append(j)
        signs.append(-sign)
        r += 1

    # accumulate Q = H_0 H_1 ... H_{r-1} applied to the first r unit vectors
    Q = np.zeros((d, r))
    Q[np.arange(r), np.arange(r)] = 1.0
    for start, v in reversed(reflectors):
        block = Q[start:, :]
        block -= 2.0 * np.outer(v, v @ block)
    # diag(R) is -sign*alpha; flip so the diagonal is positive
    Q *= np.asarray(signs)
    return Q, np.asarray(kept, dtype=int)


def orthonormalize(columns, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column span, via :func:`householder_qr`.

    Dependent columns are dropped, so the result may have fewer columns
    than the input.

    Raises
    ------
    ValueError
        If the input spans only the zero vector.
    """
    A = np.asarray(columns, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[1] == 0 or not np.any(A):
        raise ValueError("cannot orthonormalize an empty span")
    Q, _ = householder_qr(A, tol)
    if Q.shape[1] == 0:
        raise ValueError("cannot orthonormalize an empty span")
    return Q


def extend_basis(basis: np.ndarray, extra, tol: float | None = None) -> np.ndarray:
    """Orthonormal columns spanning ``span([basis | extra])`` not already in ``basis``.

    ``basis`` must already be orthonormal; only the (usually few)
    ``extra`` columns go through Householder QR after ``basis`` has been
    projected out of them.  The result ``E`` satisfies
    ``basis.T @ E ~ 0`` and may have zero columns.
    """
    basis = np.asarray(basis, dtype=float)
    E = np.asarray(extra, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    norms = np.linalg.norm(E, axis=0)
    if tol is None:
        tol = 1e-10 * (norms.max() if E.shape[1] else 0.0)
    if basis.shape[1]:
        E = E - basis @ (basis.T @ E)
        # reorthogonalise when projection cancelled most of a column
        after = np.linalg.norm(E, axis=0)
        if np.any(after < 0.7071 * norms):
            E = E - basis @ (basis.T @ E)
    Q, _ = householder_qr(E, tol)
    return Q


def _singular_values(P: np.ndarray) -> np.ndarray:
    return np.linalg.svd(P, compute_uv=False)


def reverse_projection(P) -> np.ndarray:
    """Least-squares reverse of a full-row-rank downsampling ``P``.

    Returns ``P.T @ inv(P @ P.T)`` computed with a Cholesky solve, i.e. the
    map sending a low-resolution vector to its minimum-norm preimage.
    """
    P = np.asarray(P, dtype=float)
    s = _singular_values(P)
    if s.size == 0 or s[-1] <= rank_tolerance(P.shape, s[0]) or P.shape[0] > P.shape[1]:
        raise RankDeficientError("projection matrix does not have full row rank")
    gram = P @ P.T
    try:
        factor = sla.cho_factor(gram, lower=False)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError("P @ P.T is not positive definite") from exc
    return sla.cho_solve(factor, P).T


def nullspace_basis(P) -> np.ndarray:
    """Orthonormal basis of ``{x : P x = 0}`` from the full SVD of ``P``.

    Returns a ``(d_high, d_high - rank(P))`` array, possibly with no columns.
    """
    P = np.asarray(P, dtype=float)
    _, s, Vt = np.linalg.svd(P, full_matrices=True)
    rank = int(np.sum(s > rank_tolerance(P.shape, s[0]))) if s.size else 0
    return np.ascontiguousarray(Vt[rank:].T)


def paired_alignment(B_a, B_b) -> SingularAlignment:
    """Principal correlations between two orthonormal bases.

    The singular values of ``B_a.T @ B_b`` are the cosines of the principal
    angles; the first one is the largest correlation attainable between
    a unit vector in ``span(B_a)`` and one in ``span(B_b)``.
    """
    B_a = np.asarray(B_a, dtype=float)
    B_b = np.asarray(B_b, dtype=float)
    if B_a.shape[0] != B_b.shape[0]:
        raise ValueError(
            f"ambient dimension mismatch: {B_a.shape[0]} vs {B_b.shape[0]}"
        )
    return _svd_alignment(B_a.T @ B_b)


def _svd_alignment(M: np.ndarray) -> SingularAlignment:
    if 0 in M.shape:
        r = 0
        return SingularAlignment(
            np.zeros((M.shape[0], r)), np.zeros(r), np.zeros((M.shape[1], r))
        )
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return SingularAlignment(U, s, Vt.T)


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians, ascending) between ``span(A)`` and ``span(B)``.

    Accurate for small angles as well as large ones; the inputs need not
    be orthonormal.
    """
    return np.sort(sla.subspace_angles(np.asarray(A, float), np.asarray(B, float)))
