"""Transmission/reflection coefficient design by sequential rank relaxation.

Each side's coefficient vector ``u_p`` is lifted to ``U_p = u_p u_p^H`` so a
user's gain ``|u_p^H hbar|^2`` becomes ``Tr(U_p hbar hbar^H)``. Instead of
dropping rank(U_p) = 1 outright, the program asks for
``e^H U_p e >= eps Tr(U_p)`` with ``e`` the previous principal eigenvector and
pushes ``eps`` toward one across iterations. Both sides share one ``eps``
driven by the smaller eigen-ratio.

Rates use the same slack linearization as the active beamforming, re-expanded
at every iteration's solution.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .active import ELASTIC_PENALTY, _slot_tails, add_rate_block, rate_point, slacks_from_gains
from .conic import ConicProgram, asum, eig_ratio, max_eigpair, solve
from .scenario import R_SIDE, T_SIDE
from .star import CONVENTIONAL_DOUBLE, STAR_ES, StarCoefficients, cascaded_channels
from .system import BeamformingSet, SystemModel, improves

log = logging.getLogger(__name__)

SIDES = (T_SIDE, R_SIDE)
DELTA_FLOOR = 1e-8
# eps = 1 pins U_p to the previous eigenvector exactly, which is numerically
# infeasible; the program uses at most 1 - rho_tol * EPS_CAP_FRACTION
EPS_CAP_FRACTION = 0.9


@dataclass
class RelaxationState:
    """Lifted coefficients per side (restricted to the side's active elements)."""

    U: dict
    eps: float = 0.0
    delta: float = 0.1
    index: int = 0

    sides: tuple = SIDES

    def ratios(self) -> dict:
        return {p: eig_ratio(self.U[p]) for p in self.sides}

    def min_ratio(self) -> float:
        return min(self.ratios().values())


@dataclass
class RelaxationResult:
    coeffs: StarCoefficients
    trace: list  # (eps used, solved?, objective)
    status: str
    iterations: int
    rank_residuals: dict
    initial_rate: float
    final_rate: float
    accepted: bool
    U: dict = field(default_factory=dict)
    candidate: StarCoefficients = None  # extracted coefficients, also when not accepted
    psd_min_eig: float = 0.0  # worst PSD eigenvalue over the solves


def side_elements(model: SystemModel, side: str) -> np.ndarray:
    """Element indices whose amplitude on ``side`` is free or pinned non-zero."""
    mask = model.variant.t_mask if side == T_SIDE else model.variant.r_mask
    return np.flatnonzero(mask)


def served_sides(model: SystemModel) -> tuple:
    """Sides with at least one user; only these carry rank information."""
    present = set(np.asarray(model.channels.side).tolist())
    return tuple(p for p in SIDES if p in present and len(side_elements(model, p)))


def lift(coeffs: StarCoefficients, model: SystemModel) -> dict:
    """Rank-one ``U_p`` from the current coefficients."""
    out = {}
    for p in SIDES:
        idx = side_elements(model, p)
        u = coeffs.u_vector(p)[idx]
        out[p] = np.outer(u, u.conj())
    return out


def update_epsilon(U, eps: float, delta: float) -> float:
    """``min(1, ratio + delta)`` using the smaller ratio when given several matrices.

    ``eps`` is the current value, kept only for symmetry with the state; the
    update depends on the iterate alone.
    """
    mats = [M for M in U.values() if M.size] if isinstance(U, dict) else [U]
    ratio = min(eig_ratio(M) for M in mats)
    return float(min(1.0, ratio + delta))


@dataclass
class TrSdp:
    program: ConicProgram
    U: dict
    R: dict
    shortfall: list


def build_tr_sdp(
    model: SystemModel,
    beams: np.ndarray,
    rho,
    order,
    state: RelaxationState,
    slacks,
    elastic: bool = False,
) -> TrSdp:
    """Convex program in ``U_t, U_r`` at the slack point for the current ``eps``."""
    ch = model.channels
    cluster = model.cluster
    rho = np.asarray(rho, dtype=float)
    C = model.num_clusters
    hbar = cascaded_channels(ch, beams) / np.sqrt(model.noise)  # (K, C, M)
    tails = _slot_tails(rho, order)
    idx = {p: side_elements(model, p) for p in SIDES}

    prog = ConicProgram()
    U = {p: prog.hermitian(f"U{p}", len(idx[p])) for p in SIDES}
    R, short = {}, []
    for u in range(len(cluster)):
        if not np.isfinite(slacks.A[u]):
            continue
        p = ch.side[u]
        sel = idx[p]
        gains = [U[p].trace_with(np.outer(hbar[u, j, sel], hbar[u, j, sel].conj())) for j in range(C)]
        c = cluster[u]
        inter = asum(gains[j] for j in range(C) if j != c)
        R[u], e = add_rate_block(
            prog, u, slacks.A[u], slacks.B[u], rho[u], tails[u], gains[c], inter, model.r_min, elastic
        )
        if e is not None:
            short.append(e)

    m = model.channels.num_elements
    pos = {p: {int(k): i for i, k in enumerate(idx[p])} for p in SIDES}
    if model.variant.kind == STAR_ES:
        for k in range(m):
            prog.add_eq(U[T_SIDE].diag(pos[T_SIDE][k]) + U[R_SIDE].diag(pos[R_SIDE][k]), 1.0, label="coupling")
    else:
        # conventional surfaces: every active element has unit amplitude
        for p in SIDES:
            for i in range(len(idx[p])):
                prog.add_eq(U[p].diag(i), 1.0, label="coupling")
    if state.eps > 0:
        for p in state.sides:
            _, e_max = max_eigpair(state.U[p])
            prog.add_ge(U[p].quad(e_max), state.eps * U[p].trace(), label="rank_relax")
    prog.maximize(asum(R.values()) - ELASTIC_PENALTY * asum(short))
    return TrSdp(prog, U, R, short)


def extract_coefficients(U: dict, model: SystemModel, previous: StarCoefficients = None) -> StarCoefficients:
    """Amplitudes from the diagonals, phases from the principal eigenvectors.

    Phases of a side that serves nobody are meaningless; they are copied
    from ``previous`` when given.
    """
    m = model.channels.num_elements
    served = served_sides(model)
    u = {}
    for p in SIDES:
        idx = side_elements(model, p)
        full = np.zeros(m, dtype=complex)
        if len(idx):
            _, e = max_eigpair(U[p])
            amp = np.sqrt(np.clip(np.real(np.diag(U[p])), 0.0, None))
            phase = np.angle(e)
            if p not in served and previous is not None:
                phase = np.angle(previous.u_vector(p)[idx])
            full[idx] = amp * np.exp(1j * phase)
        u[p] = full
    coupled = model.variant.kind != CONVENTIONAL_DOUBLE
    out = StarCoefficients.from_u(u[T_SIDE], u[R_SIDE], coupled=coupled)
    if model.variant.pinned:
        # amplitudes are fixed by the deployment, not by the relaxation
        out.beta_t = model.variant.t_mask.astype(float)
        out.beta_r = model.variant.r_mask.astype(float)
    return out


def _gains_from_U(model: SystemModel, beams, U: dict) -> np.ndarray:
    """``q[u, c] = Tr(U_side H̄_{u,c})`` in watts (not noise-normalized)."""
    hbar = cascaded_channels(model.channels, beams)
    K, C, _ = hbar.shape
    q = np.zeros((K, C))
    for u in range(K):
        p = model.channels.side[u]
        sel = side_elements(model, p)
        for c in range(C):
            v = hbar[u, c, sel]
            q[u, c] = np.real(v.conj() @ U[p] @ v)
    return q


def sequential_relaxation(
    model: SystemModel,
    state: BeamformingSet,
    step0: float = 0.1,
    rho_tol: float = 1e-3,
    max_iters: int = 100,
    obj_tol: float = 1e-3,
    solver_tol: float = 1e-6,
) -> RelaxationResult:
    """Optimize the coefficients for fixed beams, power split and order.

    The relaxation starts from the rank-one lift of the current coefficients
    with ``eps = 0``. ``eps`` is capped just below one (see
    ``EPS_CAP_FRACTION``). After every solvable program the step resets to
    ``step0``; after an unsolvable one the previous iterate is kept and the
    step halves. Stops once a program with ``eps >= 1 - rho_tol`` has solved
    and the objective moved less than ``obj_tol`` (relative). The extracted
    coefficients replace the input only if the true sum rate does not drop.
    """
    rel = RelaxationState(lift(state.coeffs, model), 0.0, step0, sides=served_sides(model))
    eps_cap = 1.0 - rho_tol * EPS_CAP_FRACTION
    cluster = model.cluster
    start_rate, start_ok = rate_point(model, state)
    elastic = not start_ok
    q = _gains_from_U(model, state.beams, rel.U)
    slacks = slacks_from_gains(q, cluster, state.rho, state.order, model.noise)
    trace = []
    status = "max_iters"
    last_obj = None
    solved_any = False
    psd = np.inf
    for it in range(max_iters):
        sdp = build_tr_sdp(model, state.beams, state.rho, state.order, rel, slacks, elastic)
        res = solve(sdp.program, tol=solver_tol)
        ok = res.ok
        trace.append((rel.eps, ok, res.objective if ok else np.nan))
        if ok:
            psd = min(psd, res.residuals["psd_min_eig"])
            U_new = {p: res.value(sdp.U[p]) for p in SIDES}
            rel.U = U_new
            rel.delta = step0
            q = _gains_from_U(model, state.beams, U_new)
            slacks = slacks_from_gains(q, cluster, state.rho, state.order, model.noise)
            converged = last_obj is not None and abs(res.objective - last_obj) <= obj_tol * max(abs(res.objective), 1e-12)
            last_obj = res.objective
            solved_any = True
            if abs(1.0 - rel.eps) <= rho_tol and converged:
                status = "converged"
                rel.index = it + 1
                break
        else:
            if rel.eps >= eps_cap and solved_any and rel.min_ratio() >= 1.0 - rho_tol:
                # halving the step cannot move eps off the cap; the kept
                # iterate is already rank-one to within rho_tol
                status = "stalled_at_cap"
                break
            rel.delta /= 2.0
            if rel.delta < DELTA_FLOOR:
                status = "step_underflow"
                log.debug("relaxation step underflow at eps=%.6f", rel.eps)
                break
        rel.eps = min(update_epsilon({p: rel.U[p] for p in rel.sides}, rel.eps, rel.delta), eps_cap)
        rel.index = it + 1
    residuals = {p: 1.0 - eig_ratio(rel.U[p]) for p in rel.sides}
    if not solved_any:
        return RelaxationResult(state.coeffs, trace, status, len(trace), residuals, start_rate, start_rate, False, rel.U)
    coeffs = extract_coefficients(rel.U, model, state.coeffs)
    trial = state.copy()
    trial.coeffs = coeffs
    new_rate, new_ok = rate_point(model, trial)
    accepted = improves(new_rate, new_ok, start_rate, start_ok)
    return RelaxationResult(
        coeffs if accepted else state.coeffs,
        trace,
        status,
        len(trace),
        residuals,
        start_rate,
        new_rate if accepted else start_rate,
        accepted,
        rel.U,
        coeffs,
        float(psd),
    )
