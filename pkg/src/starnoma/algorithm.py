"""Two-layer joint design and every comparison scheme.

The inner layer alternates, for a fixed decoding order, between the
closed-form power split, the active beamformers and the STAR coefficients.
The outer layer re-sorts every cluster by equivalent-combined gain and reruns
the inner layer, keeping a new solution only if the sum rate improves.

Baselines reuse the same machinery with one ingredient swapped: a
closed-form beam rule, a different ordering rule, a conventional surface, or
time-division access.
"""
from __future__ import annotations

import dataclasses
import enum
import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .active import sca_active
from .beams import mrt_beams, random_beams, zf_beams
from .passive import sequential_relaxation
from .power import check_feasibility, fallback_power, optimal_power
from .rates import DecodingOrder, combined_gain_order, decoding_order, order_by_key, verify_sic
from .scenario import STREAM_BASELINE, STREAM_INIT, ChannelSet
from .star import RisVariant, StarCoefficients, apply_variant_constraints
from .system import BeamformingSet, SystemModel, improves, qos_satisfied

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-6
EXHAUSTIVE_LIMIT = 1000


class BaselineKind(str, enum.Enum):
    PROPOSED = "proposed"
    ZF = "zf"
    MRT = "mrt"
    RANDOM_BEAMS = "random_beams"
    EXHAUSTIVE_ORDER = "exhaustive_order"
    COMBINED_GAIN_ORDER = "combined_gain_order"
    RANDOM_ORDER = "random_order"
    RIS_NOMA_SPLIT = "ris_noma_split"
    RIS_NOMA_DOUBLE = "ris_noma_double"
    RIS_OMA = "ris_oma"


@dataclass
class SolverOptions:
    inner_tol: float = 1e-3
    inner_max: int = 30
    outer_tol: float = 1e-3
    outer_max: int = 20
    sca_tol: float = 1e-4
    sca_max: int = 50
    relax_step: float = 0.1
    relax_rho: float = 1e-3
    relax_max: int = 100
    relax_obj_tol: float = 1e-3
    exhaustive_tol: float = 1e-2
    force_exhaustive: bool = False
    check_monotone: bool = True


@dataclass
class Diagnostics:
    """Per-solve records kept for audits (rank residuals, traces, statuses)."""

    active_traces: list = field(default_factory=list)
    active_rank: list = field(default_factory=list)
    active_status: list = field(default_factory=list)
    passive_rank: list = field(default_factory=list)
    passive_status: list = field(default_factory=list)
    passive_eps: list = field(default_factory=list)
    psd_min_eig: list = field(default_factory=list)

    def extend(self, other: "Diagnostics"):
        for name in self.__dataclass_fields__:
            getattr(self, name).extend(getattr(other, name))


@dataclass
class SolutionState:
    kind: str
    state: BeamformingSet
    sum_rate: float
    rates: np.ndarray
    feasible: bool
    inner_traces: list = field(default_factory=list)
    outer_trace: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    wall_time: float = 0.0

    @property
    def coeffs(self) -> StarCoefficients:
        return self.state.coeffs


class MonotonicityError(AssertionError):
    pass


# --- beams -----------------------------------------------------------------


def closed_form_beams(rule: str, model: SystemModel, coeffs, order: DecodingOrder, rng=None):
    h = model.combined(coeffs)
    if rule == "mrt":
        return mrt_beams(h, order, model.p_max)
    if rule == "zf":
        return zf_beams(h, order, model.p_max)
    if rule == "random":
        return random_beams(model.num_clusters, h.shape[1], model.p_max, rng)
    raise ValueError(f"unknown beam rule {rule!r}")


# --- power -----------------------------------------------------------------


def allocate_power(model: SystemModel, beams, coeffs, order: DecodingOrder, previous=None):
    """Closed-form optimal split per cluster; infeasible clusters keep ``previous``.

    Without a previous split, infeasible clusters get the minimum-power
    coefficients scaled onto the simplex. Returns ``(rho, infeasible clusters)``.
    """
    gains = model.gains(beams, coeffs)
    rho = np.zeros(len(gains)) if previous is None else np.array(previous, dtype=float)
    bad = []
    r = model.r_floor
    for c, slots in enumerate(order.slots):
        g = np.maximum(gains[slots], 1e-300)
        if check_feasibility(g, r).feasible:
            rho[slots] = optimal_power(g, r).rho
        else:
            bad.append(c)
            if previous is None:
                rho[slots] = fallback_power(g, r)
    return rho, bad


# --- initial point -----------------------------------------------------------


def initial_state(model: SystemModel, seed: int, beam_rule: str = "mrt", order_rule: str = "gamma") -> BeamformingSet:
    """``beta = 0.5`` (or the variant's mask), random phases, equal-power beams, closed-form power."""
    m = model.channels.num_elements
    rng = np.random.default_rng([seed, STREAM_INIT])
    coeffs = apply_variant_constraints(StarCoefficients.uniform(m, rng), model.variant)
    h = model.combined(coeffs)
    # strongest raw channel last until beams exist to measure the real gains
    pre = order_by_key(np.sum(np.abs(h) ** 2, axis=1), model.cluster)
    beam_rng = np.random.default_rng([seed, STREAM_BASELINE])
    rule = beam_rule if beam_rule != "sca" else "mrt"
    beams = closed_form_beams(rule, model, coeffs, pre, beam_rng)
    if order_rule == "gamma":
        order = decoding_order(model.gains(beams, coeffs), model.cluster)
    elif order_rule == "combined_gain":
        order = combined_gain_order(h, beams, model.cluster)
    else:
        order = pre
    if rule != "random":
        beams = closed_form_beams(rule, model, coeffs, order, beam_rng)
    rho, _ = allocate_power(model, beams, coeffs, order)
    return BeamformingSet(beams, coeffs, rho, order)


# --- inner layer -------------------------------------------------------------


def _rate(model, state):
    rep = model.report(state)
    return rep.total, qos_satisfied(rep.rates, model.r_min)


def _retry_with_power(model, state, rate, ok, **changes):
    """Rejected block output with the power split recomputed for it.

    Rank-one extraction can leave a user a hair below its floor; the closed
    form usually restores it. Returns the new ``(state, rate, ok)`` or the old.
    """
    cand = state.copy()
    for name, value in changes.items():
        setattr(cand, name, value)
    cand.rho, _ = allocate_power(model, cand.beams, cand.coeffs, cand.order, cand.rho)
    r2, ok2 = _rate(model, cand)
    if improves(r2, ok2, rate, ok):
        return cand, r2, ok2
    return state, rate, ok


def inner_loop(
    model: SystemModel,
    state: BeamformingSet,
    options: SolverOptions = None,
    beam_rule: str = "sca",
    optimize_coeffs: bool = True,
    tol: float = None,
):
    """Alternate power, active and passive blocks until the sum rate settles.

    Every block is accepted only if it does not reduce the true sum rate, so
    the recorded per-block rates form a non-decreasing chain.

    Returns ``(state, trace, flags, diagnostics)``; ``trace`` holds the rate
    before the first pass followed by the rate after every block.
    """
    options = options or SolverOptions()
    tol = options.inner_tol if tol is None else tol
    state = state.copy()
    diag = Diagnostics()
    flags = []
    rate, ok = _rate(model, state)
    trace = [rate]
    fixed_random = beam_rule == "random"
    for p in range(options.inner_max):
        start, start_ok = rate, ok
        # power
        rho, bad = allocate_power(model, state.beams, state.coeffs, state.order, state.rho)
        if bad:
            flags.append(f"power_infeasible:{p}:{bad}")
        cand = state.copy()
        cand.rho = rho
        r2, ok2 = _rate(model, cand)
        if improves(r2, ok2, rate, ok):
            state, rate, ok = cand, r2, ok2
        trace.append(rate)
        # active
        if beam_rule == "sca":
            res = sca_active(model, state, tol=options.sca_tol, max_iters=options.sca_max)
            diag.active_traces.append(res.trace)
            diag.active_rank.append(res.rank_residuals)
            diag.active_status.append(res.status)
            if res.trace:
                diag.psd_min_eig.append(res.psd_min_eig)
            if res.accepted:
                state.beams = res.beams
            elif res.candidate is not None:
                state, _, _ = _retry_with_power(model, state, *_rate(model, state), beams=res.candidate)
        elif not fixed_random:
            cand = state.copy()
            cand.beams = closed_form_beams(beam_rule, model, state.coeffs, state.order)
            r2, ok2 = _rate(model, cand)
            if improves(r2, ok2, rate, ok):
                state = cand
        rate, ok = _rate(model, state)
        trace.append(rate)
        # passive
        if optimize_coeffs:
            res = sequential_relaxation(
                model,
                state,
                step0=options.relax_step,
                rho_tol=options.relax_rho,
                max_iters=options.relax_max,
                obj_tol=options.relax_obj_tol,
            )
            diag.passive_rank.append(res.rank_residuals)
            diag.passive_status.append(res.status)
            diag.passive_eps.append([e for e, solved, _ in res.trace if solved])
            if any(solved for _, solved, _ in res.trace):
                diag.psd_min_eig.append(res.psd_min_eig)
            if res.accepted:
                state.coeffs = res.coeffs
            elif res.candidate is not None:
                state, _, _ = _retry_with_power(model, state, *_rate(model, state), coeffs=res.candidate)
        rate, ok = _rate(model, state)
        trace.append(rate)
        if options.check_monotone:
            steps = np.diff(trace[-4:])
            # a feasible start can only move up; an infeasible one may trade
            # rate for meeting the floors
            if start_ok and np.any(steps < -MONOTONE_TOL):
                raise MonotonicityError(f"inner pass {p} decreased the sum rate: {trace[-4:]}")
        if abs(rate - start) <= tol * max(abs(rate), 1e-12):
            break
    return state, trace, flags, diag


# --- outer layer -------------------------------------------------------------


def _order_for(rule: str, model: SystemModel, state: BeamformingSet) -> DecodingOrder:
    if rule == "gamma":
        return decoding_order(model.gains(state.beams, state.coeffs), model.cluster)
    if rule == "combined_gain":
        return combined_gain_order(model.combined(state.coeffs), state.beams, model.cluster)
    raise ValueError(rule)


def finalize(model: SystemModel, state: BeamformingSet, order_rule: str):
    """Order refresh plus closed-form power at the final beams and coefficients.

    For the gain-based rules this makes the reported order the fixed point of
    the rule; for the others only the power split is refreshed.
    """
    out = state.copy()
    if order_rule in ("gamma", "combined_gain"):
        out.order = _order_for(order_rule, model, out)
    rho, bad = allocate_power(model, out.beams, out.coeffs, out.order, out.rho)
    out.rho = rho
    return out, bad


def two_layer(
    model: SystemModel,
    seed: int = 0,
    options: SolverOptions = None,
    beam_rule: str = "sca",
    order_rule: str = "gamma",
    optimize_coeffs: bool = True,
    kind: str = BaselineKind.PROPOSED.value,
    initial: BeamformingSet = None,
) -> SolutionState:
    """Outer re-ordering around the inner alternation.

    ``order_rule`` is ``gamma`` (equivalent-combined gain), ``combined_gain``
    (beamformed gain only), or ``fixed`` (keep the initial order).
    """
    options = options or SolverOptions()
    t0 = time.perf_counter()
    state = initial.copy() if initial is not None else initial_state(model, seed, beam_rule, order_rule)
    order_space = math.prod(math.factorial(len(s)) for s in state.order.slots)
    cap = min(options.outer_max, order_space)
    diag = Diagnostics()
    flags = []
    state, trace, f, d = inner_loop(model, state, options, beam_rule, optimize_coeffs)
    diag.extend(d)
    flags += f
    inner_traces = [trace]
    best_rate, best_ok = _rate(model, state)
    outer = [best_rate]
    if order_rule != "fixed":
        for t in range(1, cap):
            new_order = _order_for(order_rule, model, state)
            if new_order == state.order:
                break
            cand = state.copy()
            cand.order = new_order
            cand.rho, _ = allocate_power(model, cand.beams, cand.coeffs, new_order)
            cand, trace, f, d = inner_loop(model, cand, options, beam_rule, optimize_coeffs)
            diag.extend(d)
            inner_traces.append(trace)
            r, ok = _rate(model, cand)
            if not (improves(r, ok, best_rate, best_ok) and (r > best_rate or ok != best_ok)):
                break
            change = abs(r - best_rate) / max(abs(r), 1e-12)
            state, best_rate, best_ok = cand, r, ok
            flags += f
            outer.append(best_rate)
            if change < options.outer_tol:
                break
    final, bad = finalize(model, state, order_rule)
    if bad:
        flags.append(f"final_power_infeasible:{bad}")
    rep = model.report(final)
    # the closed-form test is strict (L <= 1); a cluster sitting on the
    # boundary keeps its previous split, which may still meet every floor
    feasible = qos_satisfied(rep.rates, model.r_min)
    if order_rule == "gamma" and verify_sic(rep, final.order):
        flags.append("sic_violation")
    return SolutionState(
        kind=kind,
        state=final,
        sum_rate=rep.total,
        rates=rep.rates,
        feasible=feasible,
        inner_traces=inner_traces,
        outer_trace=outer,
        flags=flags,
        diagnostics=diag,
        wall_time=time.perf_counter() - t0,
    )


# --- ordering baselines ----------------------------------------------------------


def all_orders(cluster) -> list:
    cluster = np.asarray(cluster)
    per = [list(itertools.permutations(np.flatnonzero(cluster == c).tolist())) for c in range(int(cluster.max()) + 1)]
    return [DecodingOrder([np.array(p) for p in combo]) for combo in itertools.product(*per)]


def random_order(cluster, rng) -> DecodingOrder:
    cluster = np.asarray(cluster)
    rng = np.random.default_rng(rng)
    return DecodingOrder([rng.permutation(np.flatnonzero(cluster == c)) for c in range(int(cluster.max()) + 1)])


def exhaustive_order(model: SystemModel, seed: int = 0, options: SolverOptions = None) -> SolutionState:
    """Run the inner layer for every joint order (loose tolerance) and keep the best.

    Raises
    ------
    ValueError
        If the joint order space exceeds ``EXHAUSTIVE_LIMIT`` and
        ``options.force_exhaustive`` is off.
    """
    options = options or SolverOptions()
    orders = all_orders(model.cluster)
    if len(orders) > EXHAUSTIVE_LIMIT and not options.force_exhaustive:
        raise ValueError(f"{len(orders)} joint orders exceed the exhaustive-search limit")
    t0 = time.perf_counter()
    loose = dataclasses.replace(options, inner_tol=max(options.inner_tol, options.exhaustive_tol))
    base = initial_state(model, seed)
    best = None
    for order in orders:
        s = base.copy()
        s.order = order
        s.rho, _ = allocate_power(model, s.beams, s.coeffs, order)
        sol = two_layer(
            model, seed, loose, order_rule="fixed", kind=BaselineKind.EXHAUSTIVE_ORDER.value, initial=s
        )
        if best is None or improves(sol.sum_rate, sol.feasible, best.sum_rate, best.feasible) and (
            sol.sum_rate > best.sum_rate or sol.feasible != best.feasible
        ):
            best = sol
    best.wall_time = time.perf_counter() - t0
    best.flags.append(f"orders_searched:{len(orders)}")
    return best


# --- conventional surfaces and OMA ------------------------------------------------


def ris_noma_baseline(
    channels: ChannelSet, noise: float, p_max: float, r_min: float, variant: RisVariant, seed: int = 0, options=None
) -> SolutionState:
    """Full pipeline on a transmit-only plus reflect-only surface pair."""
    model = SystemModel(channels, noise, p_max, r_min, variant)
    kind = BaselineKind.RIS_NOMA_DOUBLE if variant.kind == "conventional_double" else BaselineKind.RIS_NOMA_SPLIT
    return two_layer(model, seed, options, kind=kind.value)


@dataclass
class OmaSlot:
    user: int
    rate: float
    snr: float
    coeffs: StarCoefficients
    beam: np.ndarray


def ris_oma_baseline(
    channels: ChannelSet, noise: float, p_max: float, r_min: float, seed: int = 0, options=None, variant=None
) -> SolutionState:
    """Time division: each user alone in a 1/K slot with full power.

    Per slot the beam is the matched filter and the surface phases come from
    the relaxation for that single user; the slot floor is ``K * r_min`` so the
    time-averaged rate meets ``r_min``.
    """
    options = options or SolverOptions()
    t0 = time.perf_counter()
    variant = variant or RisVariant.split(channels.num_elements)
    K = channels.num_users
    rates = np.zeros(K)
    slots = []
    diag = Diagnostics()
    flags = []
    for u in range(K):
        sub = channels.subset([u])
        model = SystemModel(sub, noise, p_max, K * r_min, variant)
        state = initial_state(model, seed * 1000 + u, "mrt")
        state.rho = np.ones(1)
        state, trace, f, d = inner_loop(model, state, options, beam_rule="mrt")
        diag.extend(d)
        flags += [f"user{u}:{x}" for x in f]
        rep = model.report(state)
        rates[u] = rep.rates[0] / K
        slots.append(OmaSlot(u, rep.rates[0], float(rep.sinr[0]), state.coeffs, state.beams[0]))
    # the reported state carries the per-slot decisions of user 0 only for shape
    first = slots[0]
    state = BeamformingSet(
        first.beam[None, :], first.coeffs, np.ones(1), DecodingOrder([np.array([0])]), flags=["oma"]
    )
    sol = SolutionState(
        kind=BaselineKind.RIS_OMA.value,
        state=state,
        sum_rate=float(rates.sum()),
        rates=rates,
        feasible=bool(np.all(rates >= r_min - 1e-6)),
        flags=flags,
        diagnostics=diag,
        wall_time=time.perf_counter() - t0,
    )
    sol.oma_slots = slots
    return sol


# --- dispatch -------------------------------------------------------------------


def run_scheme(kind, model: SystemModel, seed: int = 0, options: SolverOptions = None) -> SolutionState:
    """Run one scheme on the STAR model (conventional variants derive their own)."""
    kind = BaselineKind(kind)
    options = options or SolverOptions()
    ch = model.channels
    m = ch.num_elements
    if kind is BaselineKind.PROPOSED:
        return two_layer(model, seed, options)
    if kind in (BaselineKind.ZF, BaselineKind.MRT, BaselineKind.RANDOM_BEAMS):
        rule = {"zf": "zf", "mrt": "mrt", "random_beams": "random"}[kind.value]
        return two_layer(model, seed, options, beam_rule=rule, kind=kind.value)
    if kind is BaselineKind.COMBINED_GAIN_ORDER:
        return two_layer(model, seed, options, order_rule="combined_gain", kind=kind.value)
    if kind is BaselineKind.RANDOM_ORDER:
        init = initial_state(model, seed)
        init.order = random_order(model.cluster, np.random.default_rng([seed, STREAM_BASELINE, 1]))
        init.rho, _ = allocate_power(model, init.beams, init.coeffs, init.order)
        return two_layer(model, seed, options, order_rule="fixed", kind=kind.value, initial=init)
    if kind is BaselineKind.EXHAUSTIVE_ORDER:
        return exhaustive_order(model, seed, options)
    if kind is BaselineKind.RIS_NOMA_SPLIT:
        return ris_noma_baseline(ch, model.noise, model.p_max, model.r_min, RisVariant.split(m), seed, options)
    if kind is BaselineKind.RIS_NOMA_DOUBLE:
        return ris_noma_baseline(ch, model.noise, model.p_max, model.r_min, RisVariant.double(m), seed, options)
    if kind is BaselineKind.RIS_OMA:
        return ris_oma_baseline(ch, model.noise, model.p_max, model.r_min, seed, options)
    raise ValueError(kind)
