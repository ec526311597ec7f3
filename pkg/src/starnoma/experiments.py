"""Monte-Carlo trials, parameter sweeps and result persistence."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .algorithm import BaselineKind, SolverOptions, run_scheme
from .rates import DecodingOrder, rate_report, verify_sic
from .scenario import ScenarioConfig, build_channel_set
from .star import StarCoefficients, combined_channels
from .system import SystemModel

log = logging.getLogger(__name__)

PARAMS = {"M": "num_elements", "N_T": "num_antennas", "P_max": "p_max_dbm"}
CSV_COLUMNS = ("param", "value", "baseline", "mean_rate", "stderr", "n")

POWER_TOL = 1e-6
BETA_TOL = 1e-8
RHO_TOL = 1e-12
QOS_TOL = 1e-6
REPLAY_TOL = 1e-9


@dataclass
class SweepSpec:
    param: str
    values: list
    trials: int = 20
    baselines: list = field(default_factory=lambda: [BaselineKind.PROPOSED.value])
    seed: int = 0

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ValueError(f"sweep parameter must be one of {sorted(PARAMS)}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        self.baselines = [BaselineKind(b).value for b in self.baselines]

    def seeds(self) -> list:
        return [self.seed + i for i in range(self.trials)]


@dataclass
class TrialResult:
    config: dict
    seed: int
    baseline: str
    sum_rate: float
    rates: list
    beta_t: list
    beta_r: list
    iterations: dict
    wall_time: float
    feasible: bool
    decision: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    error: str = ""

    @property
    def check_failures(self) -> list:
        return [k for k, v in self.checks.items() if not v]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialResult":
        return cls(**d)


def _complex_to_lists(a) -> dict:
    a = np.asarray(a)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def _lists_to_complex(d) -> np.ndarray:
    return np.asarray(d["re"]) + 1j * np.asarray(d["im"])


def _decision_dump(sol) -> dict:
    s = sol.state
    out = {
        "beams": _complex_to_lists(s.beams),
        "coeffs": s.coeffs.to_dict(),
        "rho": s.rho.tolist(),
        "order": s.order.to_list(),
    }
    slots = getattr(sol, "oma_slots", None)
    if slots is not None:
        out["oma"] = [
            {"user": sl.user, "beam": _complex_to_lists(sl.beam), "coeffs": sl.coeffs.to_dict()} for sl in slots
        ]
    return out


def replay(result: TrialResult) -> np.ndarray:
    """Per-user rates recomputed from the stored decision variables and the regenerated channels."""
    config = ScenarioConfig.from_dict(result.config)
    ch = build_channel_set(config, result.seed)
    d = result.decision
    if "oma" in d:
        K = ch.num_users
        rates = np.zeros(K)
        for slot in d["oma"]:
            u = slot["user"]
            sub = ch.subset([u])
            h = combined_channels(sub, StarCoefficients.from_dict(slot["coeffs"]))
            w = _lists_to_complex(slot["beam"])[None, :]
            rep = rate_report(h, w, np.ones(1), DecodingOrder([np.array([0])]), config.noise_power)
            rates[u] = rep.rates[0] / K
        return rates
    coeffs = StarCoefficients.from_dict(d["coeffs"])
    h = combined_channels(ch, coeffs)
    rep = rate_report(h, _lists_to_complex(d["beams"]), np.asarray(d["rho"]), DecodingOrder(d["order"]), config.noise_power)
    return rep.rates


def verify_solution(sol, model: SystemModel, check_sic: bool) -> dict:
    """Constraint re-checks on a finished solution (independent of the solver)."""
    s = sol.state
    checks = {}
    checks["power"] = bool(np.sum(np.abs(s.beams) ** 2) <= model.p_max + POWER_TOL)
    c = s.coeffs
    if c.coupled:
        checks["beta_coupling"] = bool(np.all(np.abs(c.beta_t + c.beta_r - 1.0) <= BETA_TOL))
    else:
        checks["beta_coupling"] = bool(np.all((c.beta_t >= 0) & (c.beta_t <= 1) & (c.beta_r >= 0) & (c.beta_r <= 1)))
    checks["rho_simplex"] = bool(
        all(abs(np.sum(s.rho[slots]) - 1.0) <= RHO_TOL for slots in s.order.slots) and np.all(s.rho >= 0)
    )
    checks["qos"] = bool(np.all(np.asarray(sol.rates) >= model.r_min - QOS_TOL)) if sol.feasible else True
    if check_sic:
        rep = model.report(s)
        checks["sic"] = not verify_sic(rep, s.order)
    return checks


def run_trial(config: ScenarioConfig, baseline: str, seed: int, options: SolverOptions = None) -> TrialResult:
    """Channels, pipeline, re-verification; deterministic in ``(config, baseline, seed)``."""
    t0 = time.perf_counter()
    kind = BaselineKind(baseline)
    ch = build_channel_set(config, seed)
    model = SystemModel.from_config(config, ch)
    sol = run_scheme(kind, model, seed, options)
    checks = verify_solution(sol, model, check_sic=kind is BaselineKind.PROPOSED)
    iterations = {
        "outer": len(sol.outer_trace),
        "inner": [max(0, (len(t) - 1) // 3) for t in sol.inner_traces],
        "active": [len(t) for t in sol.diagnostics.active_traces],
        "passive": [len(e) for e in sol.diagnostics.passive_eps],
    }
    res = TrialResult(
        config=config.to_dict(),
        seed=int(seed),
        baseline=kind.value,
        sum_rate=float(np.sum(sol.rates)),
        rates=[float(r) for r in sol.rates],
        beta_t=sol.coeffs.beta_t.tolist(),
        beta_r=sol.coeffs.beta_r.tolist(),
        iterations=iterations,
        wall_time=time.perf_counter() - t0,
        feasible=bool(sol.feasible),
        decision=_decision_dump(sol),
        flags=list(sol.flags),
    )
    res.checks = checks
    res.checks["replay"] = bool(np.max(np.abs(replay(res) - np.asarray(res.rates))) <= REPLAY_TOL)
    return res


def _safe_trial(args) -> TrialResult:
    config, baseline, seed, options = args
    try:
        return run_trial(config, baseline, seed, options)
    except Exception as exc:  # recorded, the sweep goes on
        log.warning("trial %s/%s failed: %s", baseline, seed, exc)
        return TrialResult(
            config=config.to_dict(),
            seed=int(seed),
            baseline=baseline,
            sum_rate=float("nan"),
            rates=[],
            beta_t=[],
            beta_r=[],
            iterations={},
            wall_time=0.0,
            feasible=False,
            checks={"completed": False},
            error=f"{type(exc).__name__}: {exc}",
        )


def run_trials(tasks, jobs: int = 1) -> list:
    """Run ``(config, baseline, seed, options)`` tasks, results in task order."""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [_safe_trial(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_safe_trial, tasks))


def point_config(base: ScenarioConfig, param: str, value) -> ScenarioConfig:
    field_name = PARAMS[param]
    cast = float if field_name == "p_max_dbm" else int
    return base.replace(**{field_name: cast(value)})


def aggregate(results) -> tuple:
    """Mean, standard error and count of the finite sum rates."""
    x = np.array([r.sum_rate for r in results if np.isfinite(r.sum_rate)])
    if x.size == 0:
        return float("nan"), float("nan"), 0
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se, int(x.size)


def sweep(spec: SweepSpec, base: ScenarioConfig = None, options: SolverOptions = None, jobs: int = 1):
    """Run every (value, baseline, seed) and aggregate per (value, baseline).

    Returns ``(rows, results)``; rows follow ``CSV_COLUMNS`` ordered by value
    then baseline, results by value, baseline, seed.
    """
    base = base or ScenarioConfig()
    tasks, keys = [], []
    for value in spec.values:
        cfg = point_config(base, spec.param, value)
        for b in spec.baselines:
            for s in spec.seeds():
                tasks.append((cfg, b, s, options))
                keys.append((value, b))
    results = run_trials(tasks, jobs)
    rows = []
    for value in spec.values:
        for b in spec.baselines:
            group = [r for r, k in zip(results, keys) if k == (value, b)]
            mean, se, n = aggregate(group)
            rows.append({"param": spec.param, "value": value, "baseline": b, "mean_rate": mean, "stderr": se, "n": n})
    return rows, results


def write_csv(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_jsonl(results, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for r in results:
            fh.write(r.to_json() + "\n")


def read_jsonl(path) -> list:
    with open(path) as fh:
        return [TrialResult.from_dict(json.loads(line)) for line in fh if line.strip()]


def emit_amplitude_report(results) -> dict:
    """Per-element mean ``beta_t``/``beta_r`` over STAR trials and their overall means."""
    star = [r for r in results if r.beta_t and r.baseline not in ("ris_noma_split", "ris_noma_double", "ris_oma")]
    if not star:
        raise ValueError("no STAR results to summarize")
    bt = np.mean([r.beta_t for r in star], axis=0)
    br = np.mean([r.beta_r for r in star], axis=0)
    rows = [{"element": i, "beta_t": float(t), "beta_r": float(r)} for i, (t, r) in enumerate(zip(bt, br))]
    return {"rows": rows, "mean_beta_t": float(bt.mean()), "mean_beta_r": float(br.mean()), "n": len(star)}


def write_amplitude_csv(report: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=("element", "beta_t", "beta_r"), lineterminator="\n")
        w.writeheader()
        for r in report["rows"]:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
