"""SINR and rate algebra for clustered downlink NOMA with SIC.

Slot semantics: ``order.slots[c][k]`` is the global index of the user
decoded k-th (0-based) in cluster ``c``. A user in slot ``k`` sees
intra-cluster interference from the users in slots ``k+1 ...``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIC_TOL = 1e-9


@dataclass
class DecodingOrder:
    slots: list

    def __post_init__(self):
        self.slots = [np.asarray(s, dtype=int) for s in self.slots]

    def validate(self, cluster: np.ndarray):
        for c, s in enumerate(self.slots):
            members = np.flatnonzero(np.asarray(cluster) == c)
            if sorted(s.tolist()) != members.tolist():
                raise ValueError(f"order of cluster {c} is not a permutation of its users")

    def slot_of(self, user: int) -> tuple:
        for c, s in enumerate(self.slots):
            hit = np.flatnonzero(s == user)
            if hit.size:
                return c, int(hit[0])
        raise KeyError(user)

    def to_list(self) -> list:
        return [s.tolist() for s in self.slots]

    def __eq__(self, other):
        if not isinstance(other, DecodingOrder) or len(self.slots) != len(other.slots):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.slots, other.slots))

    def __hash__(self):
        return hash(tuple(tuple(s.tolist()) for s in self.slots))

    @classmethod
    def identity(cls, cluster) -> "DecodingOrder":
        cluster = np.asarray(cluster)
        return cls([np.flatnonzero(cluster == c) for c in range(int(cluster.max()) + 1)])


@dataclass
class RateReport:
    """Per-user SINR/rates, cross-decoding rates and the sum rate (bits/s/Hz).

    ``cross[(c, j, k)]`` is the rate at which the slot-``j`` user of cluster
    ``c`` decodes the slot-``k`` message (j > k).
    """

    sinr: np.ndarray
    rates: np.ndarray
    cross: dict = field(default_factory=dict)
    total: float = 0.0


def gain_matrix(h: np.ndarray, beams: np.ndarray) -> np.ndarray:
    """``Q[u, c] = |h_u w_c|^2`` for combined channels ``h`` (K x N) and beams (C x N)."""
    return np.abs(np.asarray(h) @ np.asarray(beams).T) ** 2


def _check_noise(noise):
    if noise <= 0:
        raise ValueError("noise power must be positive")


def _sinr(q_row, c, rho_k, rho_after, noise):
    inter = q_row.sum() - q_row[c]
    return q_row[c] * rho_k / (q_row[c] * rho_after + inter + noise)


def sinr_self(h_all, w_all, rho, order: DecodingOrder, c: int, k: int, noise: float) -> float:
    """SINR of the slot-``k`` user of cluster ``c`` decoding its own message."""
    _check_noise(noise)
    slots = order.slots[c]
    u = slots[k]
    q = gain_matrix(np.asarray(h_all)[u : u + 1], w_all)[0]
    rho = np.asarray(rho)
    return float(_sinr(q, c, rho[u], rho[slots[k + 1 :]].sum(), noise))


def sinr_cross(h_all, w_all, rho, order: DecodingOrder, c: int, j: int, k: int, noise: float) -> float:
    """SINR at the slot-``j`` user when decoding the slot-``k`` message, j > k."""
    if j <= k:
        raise ValueError("cross decoding needs j > k")
    _check_noise(noise)
    slots = order.slots[c]
    uj, uk = slots[j], slots[k]
    q = gain_matrix(np.asarray(h_all)[uj : uj + 1], w_all)[0]
    rho = np.asarray(rho)
    return float(_sinr(q, c, rho[uk], rho[slots[k + 1 :]].sum(), noise))


def equivalent_gains(h_all, w_all, cluster, noise: float) -> np.ndarray:
    """Beamformed gain over inter-cluster interference plus noise, per user."""
    _check_noise(noise)
    q = gain_matrix(h_all, w_all)
    cluster = np.asarray(cluster)
    own = q[np.arange(len(cluster)), cluster]
    return own / (q.sum(axis=1) - own + noise)


def equivalent_gain(h_all, w_all, user: int, cluster, noise: float) -> float:
    return float(equivalent_gains(np.asarray(h_all)[user : user + 1], w_all, np.asarray(cluster)[user : user + 1], noise)[0])


def order_by_key(key, cluster) -> DecodingOrder:
    """Per cluster, ascending ``key``; ties go to the lower user index."""
    key = np.asarray(key, dtype=float)
    cluster = np.asarray(cluster)
    slots = []
    for c in range(int(cluster.max()) + 1):
        members = np.flatnonzero(cluster == c)
        # lexsort: last key is primary
        slots.append(members[np.lexsort((members, key[members]))])
    return DecodingOrder(slots)


def decoding_order(gains, cluster) -> DecodingOrder:
    """Decode the weakest equivalent-combined gain first."""
    return order_by_key(gains, cluster)


def combined_gain_order(h_all, w_all, cluster) -> DecodingOrder:
    """Ascending ``|h_u w_c|^2`` ignoring inter-cluster interference."""
    q = gain_matrix(h_all, w_all)
    cluster = np.asarray(cluster)
    return order_by_key(q[np.arange(len(cluster)), cluster], cluster)


def rate_report(h_all, w_all, rho, order: DecodingOrder, noise: float) -> RateReport:
    _check_noise(noise)
    q = gain_matrix(h_all, w_all)
    rho = np.asarray(rho, dtype=float)
    K = q.shape[0]
    sinr = np.zeros(K)
    cross = {}
    for c, slots in enumerate(order.slots):
        after = np.concatenate([np.cumsum(rho[slots][::-1])[::-1][1:], [0.0]])
        for k, u in enumerate(slots):
            sinr[u] = _sinr(q[u], c, rho[u], after[k], noise)
            for j in range(k + 1, len(slots)):
                s = _sinr(q[slots[j]], c, rho[u], after[k], noise)
                cross[(c, j, k)] = float(np.log2(1.0 + s))
    rates = np.log2(1.0 + sinr)
    return RateReport(sinr=sinr, rates=rates, cross=cross, total=float(rates.sum()))


def verify_sic(report: RateReport, order: DecodingOrder, tol: float = SIC_TOL) -> list:
    """Return every (c, j, k) whose SIC decoding condition fails."""
    bad = []
    for c, slots in enumerate(order.slots):
        for k in range(len(slots)):
            own = report.rates[slots[k]]
            for j in range(k + 1, len(slots)):
                if report.cross[(c, j, k)] < own - tol:
                    bad.append((c, j, k))
    return bad


def sum_rate(report: RateReport) -> float:
    return float(np.sum(np.log2(1.0 + np.asarray(report.sinr))))
