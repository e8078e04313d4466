"""Symmetric positive definite solves on dense or CSR matrices."""

from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import IndefiniteSystem


def add_diagonal(H, d: np.ndarray):
    if sp.issparse(H):
        return (H + sp.diags(d)).tocsc()
    M = np.array(H, dtype=float, copy=True)
    M[np.diag_indices_from(M)] += d
    return M


def submatrix(H, rows: np.ndarray, cols: np.ndarray):
    if sp.issparse(H):
        return H.tocsr()[rows][:, cols]
    return H[np.ix_(rows, cols)]


def spd_solve(M, rhs: np.ndarray, error=IndefiniteSystem) -> np.ndarray:
    """Solve M y = rhs for symmetric positive definite M.

    Dense matrices go through Cholesky, which doubles as the definiteness
    test. Sparse matrices use a sparse LU, which only detects singularity.
    """
    if M.shape[0] == 0:
        return np.zeros(0)
    if sp.issparse(M):
        try:
            y = spla.splu(sp.csc_matrix(M)).solve(rhs)
        except RuntimeError as exc:
            raise error(str(exc)) from None
        if not np.all(np.isfinite(y)):
            raise error("sparse factorization produced non-finite values")
        return y
    try:
        factor = la.cho_factor(M, lower=True, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise error(str(exc)) from None
    return la.cho_solve(factor, rhs, check_finite=False)


def diagonal(H) -> np.ndarray:
    return np.asarray(H.diagonal(), dtype=float)
