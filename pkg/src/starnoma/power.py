"""Closed-form intra-cluster power allocation.

Inputs are per-cluster arrays in decoding-slot order: equivalent gains
``gamma`` and linear SINR floors ``r = 2**R_min - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class InfeasibleClusterError(ValueError):
    """The QoS floors of a cluster cannot be met with a unit power budget."""

    def __init__(self, load: float):
        super().__init__(f"cluster infeasible: minimum power load {load:.6g} > 1")
        self.load = load


class Feasibility(NamedTuple):
    feasible: bool
    margin: float
    load: float


@dataclass
class PowerAllocation:
    rho: np.ndarray
    feasible: bool
    r_min: np.ndarray


def rate_to_sinr(r_min_bits):
    return 2.0 ** np.asarray(r_min_bits, dtype=float) - 1.0


def _as_inputs(gamma, r):
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    r = np.broadcast_to(np.asarray(r, dtype=float), gamma.shape).copy()
    if np.any(gamma <= 0):
        raise ValueError("equivalent gains must be positive")
    if np.any(r < 0):
        raise ValueError("SINR floors must be non-negative")
    return gamma, r


def min_power_coefficients(gamma, r) -> np.ndarray:
    """Smallest coefficients meeting every floor exactly (back recursion)."""
    gamma, r = _as_inputs(gamma, r)
    rho = np.zeros_like(gamma)
    tail = 0.0
    for k in range(len(gamma) - 1, -1, -1):
        rho[k] = r[k] * (tail + 1.0 / gamma[k])
        tail += rho[k]
    return rho


def check_feasibility(gamma, r) -> Feasibility:
    """Minimum total power load ``L``; the cluster is feasible iff ``L <= 1``."""
    gamma, r = _as_inputs(gamma, r)
    prefix = np.concatenate([[1.0], np.cumprod(r + 1.0)[:-1]])
    load = float(np.sum(r / gamma * prefix))
    return Feasibility(load <= 1.0, 1.0 - load, load)


def optimal_power(gamma, r) -> PowerAllocation:
    """Sum-rate optimal coefficients for one cluster.

    Every user but the strongest gets exactly its floor; the residual power
    goes to the last-decoded user.
    """
    gamma, r = _as_inputs(gamma, r)
    feas = check_feasibility(gamma, r)
    if not feas.feasible:
        raise InfeasibleClusterError(feas.load)
    rho = np.zeros_like(gamma)
    used = 0.0
    for k in range(len(gamma) - 1):
        rho[k] = r[k] / (1.0 + r[k]) * (1.0 - used + 1.0 / gamma[k])
        used += rho[k]
    rho[-1] = 1.0 - used
    return PowerAllocation(rho=rho, feasible=True, r_min=r)


def fallback_power(gamma, r) -> np.ndarray:
    """Minimum-power coefficients scaled onto the simplex (infeasible clusters)."""
    rho = min_power_coefficients(gamma, r)
    s = rho.sum()
    if s <= 0:
        out = np.zeros_like(rho)
        out[-1] = 1.0
        return out
    return rho / s


def slot_rates(rho, gamma) -> np.ndarray:
    """Per-slot rates of one cluster from coefficients and equivalent gains."""
    rho = np.asarray(rho, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    after = np.concatenate([np.cumsum(rho[::-1])[::-1][1:], [0.0]])
    return np.log2(1.0 + gamma * rho / (gamma * after + 1.0))


def cluster_objective(rho, gamma, r=None, tol: float = 1e-9) -> float:
    """Cluster sum rate evaluated directly from the per-slot SINRs.

    With ``r`` given, also checks that all but the last user sit on their
    floor, as the optimal allocation requires.
    """
    rates = slot_rates(rho, gamma)
    if r is not None and len(rates) > 1:
        floors = np.log2(1.0 + np.broadcast_to(np.asarray(r, dtype=float), rates.shape))
        if np.any(np.abs(rates[:-1] - floors[:-1]) > tol):
            raise AssertionError("non-final users are not at their rate floor")
    return float(rates.sum())
