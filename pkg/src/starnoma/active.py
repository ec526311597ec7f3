"""Active beamforming by successive convex approximation over lifted beams.

Each cluster beam ``w_c`` is lifted to ``W_c = w_c w_c^H``. Per user the
rate ``log2(1 + 1/(A B))`` is rewritten with slacks ``1/A <= rho Tr(W H)``
and ``B >= interference + noise``, and the jointly convex ``f(A, B)`` is
replaced by its tangent plane at the previous iterate. The rank-one
constraint is dropped; solutions come back rank-one in practice and the
residual is recorded.

Internally all powers are normalized by ``p_max`` and the noise, and the
slacks are scaled by their expansion point, so every SDP variable is O(1).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, asum, rank_one_extract, solve
from .rates import DecodingOrder, gain_matrix
from .system import BeamformingSet, SystemModel, improves, qos_satisfied

log = logging.getLogger(__name__)

LOG2E = float(np.log2(np.e))
EPS_CLAMP = 1e-18
RHO_ZERO = 1e-15
ELASTIC_PENALTY = 1e2


class DegenerateChannelWarning(RuntimeWarning):
    pass


@dataclass
class SlackState:
    """Slack point ``(A, B)`` per user in noise-normalized units; ``nan`` for silent users."""

    A: np.ndarray
    B: np.ndarray
    index: int = 0
    clamped: list = field(default_factory=list)

    def rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            out = np.log2(1.0 + 1.0 / (self.A * self.B))
        return np.where(np.isfinite(out), out, 0.0)


@dataclass
class ActiveBeams:
    beams: np.ndarray

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.beams) ** 2))

    def within_budget(self, p_max: float, tol: float = 1e-6) -> bool:
        return self.total_power <= p_max + tol


@dataclass
class ActiveResult:
    beams: np.ndarray
    trace: list
    status: str
    iterations: int
    rank_residuals: list
    initial_rate: float
    final_rate: float
    accepted: bool
    candidate: np.ndarray = None  # extracted beams, also when not accepted
    psd_min_eig: float = 0.0  # worst PSD eigenvalue over the solves


def _slot_tails(rho, order: DecodingOrder) -> np.ndarray:
    """Total coefficient of the users decoded after each user in its cluster."""
    tails = np.zeros(len(rho))
    for slots in order.slots:
        r = np.asarray(rho)[slots]
        tails[slots] = np.concatenate([np.cumsum(r[::-1])[::-1][1:], [0.0]])
    return tails


def slacks_from_gains(q: np.ndarray, cluster, rho, order: DecodingOrder, noise: float) -> SlackState:
    """Tight slacks from ``q[u, c] = Tr(W_c H_u)`` (or ``|h_u w_c|^2``)."""
    cluster = np.asarray(cluster)
    rho = np.asarray(rho, dtype=float)
    K = len(cluster)
    own = q[np.arange(K), cluster]
    tails = _slot_tails(rho, order)
    inter = q.sum(axis=1) - own
    B = (own * tails + inter + noise) / noise
    sig = own * rho / noise
    A = np.full(K, np.nan)
    clamped = []
    for u in range(K):
        if rho[u] <= RHO_ZERO:
            continue
        if sig[u] <= 0:
            A[u] = 1.0 / EPS_CLAMP
            clamped.append(u)
        else:
            A[u] = 1.0 / sig[u]
    if clamped:
        warnings.warn(f"zero beamformed gain for users {clamped}; slack clamped", DegenerateChannelWarning)
    return SlackState(A, B, clamped=clamped)


def init_slacks(h_all, beams, rho, order: DecodingOrder, cluster, noise: float) -> SlackState:
    """Slacks evaluated at the current beams, so the start point is feasible."""
    return slacks_from_gains(gain_matrix(h_all, beams), cluster, rho, order, noise)


def taylor_bound(A, B, A0, B0):
    """Tangent plane of ``log2(1 + 1/(A B))`` at ``(A0, B0)``; a global under-estimator."""
    A, B, A0, B0 = (np.asarray(v, dtype=float) for v in (A, B, A0, B0))
    if np.any(A <= 0) or np.any(B <= 0) or np.any(A0 <= 0) or np.any(B0 <= 0):
        raise ValueError("slack arguments must be positive")
    d = 1.0 + A0 * B0
    f0 = np.log2(1.0 + 1.0 / (A0 * B0))
    out = f0 - LOG2E * (A - A0) / (A0 * d) - LOG2E * (B - B0) / (B0 * d)
    return float(out) if out.ndim == 0 else out


def add_rate_block(prog: ConicProgram, u, A0, B0, rho_u, tail_u, own, inter, r_min, elastic=False):
    """Rate variable of user ``u`` with its slacks, in noise-normalized units.

    ``own`` and ``inter`` are affine expressions for the user's own-beam
    gain and the inter-cluster gain. Slacks are scaled as ``A = A0 a`` and
    ``B = B0 b``. Adds four constraints (rate bound, QoS floor, hyperbolic
    signal block, interference bound) and returns ``(R, shortfall)``.
    """
    a = prog.scalar(f"a{u}")
    b = prog.scalar(f"b{u}")
    r = prog.scalar(f"R{u}")
    d = 1.0 + A0 * B0
    f0 = np.log2(1.0 + 1.0 / (A0 * B0))
    prog.add_le(r, f0 - (LOG2E / d) * (a - 1.0) - (LOG2E / d) * (b - 1.0), label="rate_bound")
    e = None
    if elastic:
        e = prog.scalar(f"s{u}", lower=0.0)
        prog.add_ge(r + e, r_min, label="qos")
    else:
        prog.add_ge(r, r_min, label="qos")
    prog.add_hyperbolic(a, (A0 * rho_u) * own, label="signal")
    prog.add_ge(b, (1.0 / B0) * (tail_u * own + inter + 1.0), label="interference")
    return r, e


@dataclass
class ActiveSdp:
    program: ConicProgram
    W: list
    R: dict
    scale: float
    shortfall: list = field(default_factory=list)


def build_active_sdp(
    model: SystemModel, h_all, rho, order: DecodingOrder, slacks: SlackState, elastic: bool = False
) -> ActiveSdp:
    """Convex subproblem at the slack point; ``W`` blocks are in units of ``p_max``.

    With ``elastic`` the QoS floors get non-negative shortfall variables
    charged at ``ELASTIC_PENALTY`` per bit, which keeps the program feasible
    from a start point that misses some floor.
    """
    cluster = model.cluster
    rho = np.asarray(rho, dtype=float)
    C = model.num_clusters
    n = h_all.shape[1]
    gscale = model.p_max / model.noise
    G = [gscale * np.outer(h.conj(), h) for h in h_all]
    tails = _slot_tails(rho, order)

    prog = ConicProgram()
    W = [prog.hermitian(f"W{c}", n) for c in range(C)]
    R = {}
    short = []
    for u in range(len(cluster)):
        if rho[u] <= RHO_ZERO or not np.isfinite(slacks.A[u]):
            continue
        c = cluster[u]
        own = W[c].trace_with(G[u])
        inter = asum(W[j].trace_with(G[u]) for j in range(C) if j != c)
        R[u], e = add_rate_block(
            prog, u, slacks.A[u], slacks.B[u], rho[u], tails[u], own, inter, model.r_min, elastic
        )
        if e is not None:
            short.append(e)
    prog.add_le(asum(Wc.trace() for Wc in W), 1.0, label="power")
    prog.maximize(asum(R.values()) - ELASTIC_PENALTY * asum(short))
    return ActiveSdp(prog, W, R, model.p_max, short)


def rate_point(model: SystemModel, state: BeamformingSet):
    """True sum rate of ``state`` and whether every floor is met."""
    rep = model.report(state)
    return rep.total, qos_satisfied(rep.rates, model.r_min)


def sca_active(
    model: SystemModel,
    state: BeamformingSet,
    tol: float = 1e-4,
    max_iters: int = 50,
    solver_tol: float = 1e-6,
) -> ActiveResult:
    """Iterate the convexified program until the objective settles.

    A start point that misses a QoS floor is handled in elastic mode (see
    :func:`build_active_sdp`) for the whole run so the objective trace stays
    comparable. Returns the extracted rank-one beams. They replace the input beams only
    if the true sum rate does not drop (QoS-feasible results always beat
    infeasible ones); otherwise the input beams come back with
    ``accepted=False``.
    """
    h_all = model.combined(state.coeffs)
    cluster = model.cluster
    slacks = init_slacks(h_all, state.beams, state.rho, state.order, cluster, model.noise)
    start_rate, start_ok = rate_point(model, state)
    trace, residuals = [], []
    status = "converged"
    W_best = None
    psd = np.inf
    # a start that misses a floor would make the strict program infeasible
    elastic = not start_ok
    for it in range(max_iters):
        sdp = build_active_sdp(model, h_all, state.rho, state.order, slacks, elastic=elastic)
        res = solve(sdp.program, tol=solver_tol)
        if not res.ok:
            status = res.status
            log.debug("active SDP stopped at iteration %d: %s", it, res.status)
            break
        if trace and res.objective < trace[-1]:
            # the previous iterate is feasible at its own value, so a drop is
            # solver inaccuracy: nothing left to gain, keep the previous W
            log.debug("active SDP objective fell by %.2e at iteration %d; stopping", trace[-1] - res.objective, it)
            break
        psd = min(psd, res.residuals["psd_min_eig"])
        Ws = [sdp.scale * res.value(Wc) for Wc in sdp.W]
        residuals.append(max(rank_one_extract(Wc)[1] for Wc in Ws))
        trace.append(res.objective)
        W_best = Ws
        q = np.array([[np.real(h @ Wc @ h.conj()) for Wc in Ws] for h in h_all])
        slacks = slacks_from_gains(q, cluster, state.rho, state.order, model.noise)
        slacks.index = it + 1
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * max(abs(trace[-1]), 1e-12):
            break
    else:
        status = "max_iters"
    if W_best is None:
        return ActiveResult(state.beams, trace, status, len(trace), residuals, start_rate, start_rate, False)
    psd = float(psd)
    beams = np.array([rank_one_extract(Wc)[0] for Wc in W_best])
    # guard against solver overshoot of the budget
    p = np.sum(np.abs(beams) ** 2)
    if p > model.p_max:
        beams *= np.sqrt(model.p_max / p)
    trial = state.copy()
    trial.beams = beams
    new_rate, new_ok = rate_point(model, trial)
    accepted = improves(new_rate, new_ok, start_rate, start_ok)
    candidate = beams
    if not accepted:
        beams = state.beams
    return ActiveResult(
        beams,
        trace,
        status,
        len(trace),
        residuals,
        start_rate,
        new_rate if accepted else start_rate,
        accepted,
        candidate,
        psd,
    )
