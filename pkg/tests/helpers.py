"""Shared builders for solver tests."""
import numpy as np

from starnoma.conic.program import _layout
from starnoma.scenario import R_SIDE, T_SIDE, ChannelSet
from starnoma.system import SystemModel


def hermitian_params(X):
    iu, iu1 = _layout(X.shape[0])
    return np.concatenate([X.real[iu], X.imag[iu1]])


def point_vector(program, blocks: dict, scalars: dict):
    """Variable vector with the given block values and named scalar values."""
    x = np.zeros(program.num_vars)
    for var, X in blocks.items():
        x[var.offset : var.offset + var.size] = hermitian_params(np.asarray(X))
    for s in program.scalars:
        if s.name in scalars:
            x[s.offset] = scalars[s.name]
    return x


def single_user_model(rng, m=4, n=3, side=T_SIDE, r_min=0.0):
    F = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) * 1e-3
    g = (rng.standard_normal((1, m)) + 1j * rng.standard_normal((1, m))) * 1e-3
    ch = ChannelSet(F, g, np.array([side]), np.array([0]))
    return SystemModel(ch, noise=1e-12, p_max=1.0, r_min=r_min)


def toy_model(rng, sizes=(2, 2), m=4, n=3, sides=(T_SIDE, R_SIDE), r_min=0.1, p_max=1.0):
    K = sum(sizes)
    cluster = np.repeat(np.arange(len(sizes)), sizes)
    F = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) * 1e-3
    g = (rng.standard_normal((K, m)) + 1j * rng.standard_normal((K, m))) * 1e-3
    side = np.array([sides[c % len(sides)] for c in cluster])
    return SystemModel(ChannelSet(F, g, side, cluster), noise=1e-12, p_max=p_max, r_min=r_min)
