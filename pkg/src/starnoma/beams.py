"""Closed-form beamformers: MRT, zero-forcing and random directions.

All return a (C, N_T) array with each cluster given ``p_max / C``.
"""
from __future__ import annotations

import numpy as np

from .rates import DecodingOrder


def representatives(order: DecodingOrder) -> np.ndarray:
    """Highest-decoding-order user of every cluster (the last SIC stage)."""
    return np.array([int(s[-1]) for s in order.slots])


def _scale(directions: np.ndarray, p_max: float) -> np.ndarray:
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero beam direction")
    c = directions.shape[0]
    return directions / norms * np.sqrt(p_max / c)


def mrt_beams(h_all: np.ndarray, order: DecodingOrder, p_max: float) -> np.ndarray:
    """Matched filter ``w_c ∝ h_rep^H`` toward each cluster's representative."""
    h_all = np.asarray(h_all, dtype=complex)
    return _scale(h_all[representatives(order)].conj(), p_max)


def zf_beams(h_all: np.ndarray, order: DecodingOrder, p_max: float) -> np.ndarray:
    """Zero-forcing over the stacked representative channels.

    Raises
    ------
    ValueError
        If the representative stack is rank deficient (for instance C > N_T).
    """
    h_all = np.asarray(h_all, dtype=complex)
    Hs = h_all[representatives(order)]
    c, n = Hs.shape
    if c > n or np.linalg.matrix_rank(Hs) < c:
        raise ValueError(f"zero-forcing needs {c} independent channels, stack has rank {np.linalg.matrix_rank(Hs)}")
    # columns of pinv(Hs) satisfy Hs @ W = I
    W = np.linalg.pinv(Hs)
    return _scale(W.T, p_max)


def random_beams(num_clusters: int, num_antennas: int, p_max: float, rng) -> np.ndarray:
    """Isotropic complex Gaussian directions."""
    rng = np.random.default_rng(rng)
    d = rng.standard_normal((num_clusters, num_antennas)) + 1j * rng.standard_normal((num_clusters, num_antennas))
    return _scale(d, p_max)
