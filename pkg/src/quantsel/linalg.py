"""Cholesky-based helpers for small Hermitian Gram matrices."""
from __future__ import annotations

import numpy as np
from scipy import linalg as sla

__all__ = ["IllConditionedError", "gram_cholesky", "gram_inverse_trace", "logdet_hpd", "log2det_hpd"]

COND_LIMIT = 1e12
_JITTER = 1e-12
_LN2 = np.log(2.0)


class IllConditionedError(np.linalg.LinAlgError):
    """The Gram matrix of a channel is (numerically) rank deficient."""


def gram_cholesky(H: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``H H^H``; raises for ill-conditioned ``H``."""
    H = np.atleast_2d(H)
    if H.shape[0] > H.shape[1]:
        raise IllConditionedError(
            f"{H.shape[0]} x {H.shape[1]} channel cannot have full row rank"
        )
    gram = H @ H.conj().T
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0 or eig[-1] / eig[0] > COND_LIMIT:
        raise IllConditionedError("channel Gram matrix is ill conditioned")
    return np.linalg.cholesky(gram)


def gram_inverse_trace(H: np.ndarray) -> float:
    """``tr((H H^H)^{-1})`` as the squared Frobenius norm of ``L^{-1}``."""
    L = gram_cholesky(H)
    Linv = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return float(np.sum(np.abs(Linv) ** 2))


def logdet_hpd(M: np.ndarray) -> np.ndarray:
    """Natural log-determinant of Hermitian positive definite matrices.

    Works on a single matrix or a stack.  A tiny diagonal jitter is added only
    when rounding makes the factorisation fail.
    """
    M = np.asarray(M)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        n = M.shape[-1]
        L = np.linalg.cholesky(M + _JITTER * np.eye(n))
    diag = np.diagonal(L, axis1=-2, axis2=-1).real
    return 2.0 * np.sum(np.log(diag), axis=-1)


def log2det_hpd(M: np.ndarray) -> np.ndarray:
    return logdet_hpd(M) / _LN2
