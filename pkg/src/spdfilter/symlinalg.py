"""Matrix calculus on symmetric matrices.

All matrix functions (sqrt, log, exp) go through the symmetric
eigendecomposition: apply the scalar function to the eigenvalues and
reconstruct.  This preserves symmetry exactly and keeps error control
simple.  Inputs are symmetrized as ``(S + S.T) / 2`` before
decomposition to absorb roundoff accumulated upstream.

The half-vectorization pair :func:`vech` / :func:`sym_from_vech` uses
the row-major upper triangle ``(S11, S12, ..., S1D, S22, ..., SDD)``
with plain entries (no sqrt(2) weighting).
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInput, NotPositiveDefinite

# Relative eigenvalue floor of the SPD guard: a symmetric matrix is
# rejected as not positive-definite when lambda_min <= SPD_RTOL * lambda_max.
SPD_RTOL = 1e-12


def _as_square(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInput("matrix has non-finite entries")
    return S


def symmetrize(S) -> np.ndarray:
    """Return ``(S + S.T) / 2`` after validating shape and finiteness."""
    S = _as_square(S)
    return (S + S.T) / 2.0


def sym_eigen(S) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    S : (D, D) array_like
        Symmetric matrix (symmetrized internally).

    Returns
    -------
    Q : (D, D) ndarray
        Orthonormal eigenvectors, one per column.
    lam : (D,) ndarray
        Eigenvalues in descending order, matching the columns of ``Q``.
    """
    S = symmetrize(S)
    lam, Q = np.linalg.eigh(S)
    return Q[:, ::-1], lam[::-1]


def is_spd(S, rtol: float = SPD_RTOL) -> bool:
    """True when the smallest eigenvalue clears the relative SPD guard."""
    _, lam = sym_eigen(S)
    lam_max = lam[0]
    return bool(lam_max > 0.0 and lam[-1] > rtol * lam_max)


def assert_spd(S, rtol: float = SPD_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition that raises :class:`NotPositiveDefinite` on failure.

    Returns the ``(Q, lam)`` pair so callers do not decompose twice.
    """
    Q, lam = sym_eigen(S)
    lam_max = lam[0]
    if not (lam_max > 0.0 and lam[-1] > rtol * lam_max):
        raise NotPositiveDefinite(
            f"matrix is not positive-definite within guard: "
            f"lambda_min={lam[-1]:.3e}, lambda_max={lam_max:.3e}"
        )
    return Q, lam


def _apply_scalar(Q: np.ndarray, lam: np.ndarray, fn) -> np.ndarray:
    out = (Q * fn(lam)) @ Q.T
    return (out + out.T) / 2.0


def mat_sqrt(S) -> np.ndarray:
    """Principal square root of an SPD matrix."""
    Q, lam = assert_spd(S)
    return _apply_scalar(Q, lam, np.sqrt)


def mat_inv_sqrt(S) -> np.ndarray:
    """Inverse principal square root of an SPD matrix."""
    Q, lam = assert_spd(S)
    return _apply_scalar(Q, lam, lambda v: 1.0 / np.sqrt(v))


def mat_log(S) -> np.ndarray:
    """Matrix logarithm of an SPD matrix (symmetric result)."""
    Q, lam = assert_spd(S)
    return _apply_scalar(Q, lam, np.log)


def mat_exp(V) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (SPD result)."""
    Q, lam = sym_eigen(V)
    return _apply_scalar(Q, lam, np.exp)


def vech_dim(D: int) -> int:
    """Length of the half-vectorization of a ``D x D`` symmetric matrix."""
    return D * (D + 1) // 2


def matrix_dim(d: int) -> int:
    """Inverse of :func:`vech_dim`; raises when ``d`` is not triangular."""
    D = int((np.sqrt(8 * d + 1) - 1) / 2)
    if vech_dim(D) != d:
        raise InvalidInput(f"length {d} is not D*(D+1)/2 for any integer D")
    return D


def vech(S) -> np.ndarray:
    """Half-vectorize a symmetric matrix (row-major upper triangle)."""
    S = symmetrize(S)
    i, j = np.triu_indices(S.shape[0])
    return S[i, j].copy()


def sym_from_vech(v) -> np.ndarray:
    """Rebuild a symmetric matrix from its half-vectorization.

    The length of ``v`` must equal ``D * (D + 1) / 2`` for some integer D.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InvalidInput(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInput("vector has non-finite entries")
    d = v.size
    D = int((np.sqrt(8 * d + 1) - 1) / 2)
    if vech_dim(D) != d:
        raise InvalidInput(f"length {d} is not D*(D+1)/2 for any integer D")
    S = np.zeros((D, D))
    i, j = np.triu_indices(D)
    S[i, j] = v
    S[j, i] = v
    return S
