"""Eigen utilities for recovering vectors from lifted PSD solutions."""
from __future__ import annotations

import numpy as np

HERMITIAN_RTOL = 1e-10


def _check_hermitian(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    norm = np.linalg.norm(A)
    if np.linalg.norm(A - A.conj().T) > HERMITIAN_RTOL * max(norm, 1.0):
        raise ValueError("matrix is not Hermitian")
    return 0.5 * (A + A.conj().T)


def max_eigpair(A):
    """Largest eigenvalue and a unit eigenvector of a Hermitian matrix."""
    A = _check_hermitian(A)
    w, V = np.linalg.eigh(A)
    return float(w[-1]), V[:, -1]


def eig_ratio(A) -> float:
    """``lambda_max / trace``; 1 for rank-one, 1/n for a scaled identity."""
    lam, _ = max_eigpair(A)
    tr = float(np.real(np.trace(A)))
    return lam / tr if tr > 0 else 1.0


def rank_one_extract(W):
    """Principal component ``sqrt(lambda_max) e_max`` and the residual ``1 - lambda_max/Tr``.

    The phase is fixed so the first non-negligible entry is real and >= 0.
    """
    lam, e = max_eigpair(W)
    tr = float(np.real(np.trace(W)))
    if tr <= 0:
        return np.zeros(len(e), dtype=complex), 0.0
    mags = np.abs(e)
    first = int(np.flatnonzero(mags > 1e-12 * mags.max())[0])
    e = e * np.exp(-1j * np.angle(e[first]))
    return np.sqrt(max(lam, 0.0)) * e, 1.0 - lam / tr
