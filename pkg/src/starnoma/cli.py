"""Command line: ``starnoma run | sweep | bench``.

Exit status is 1 when any trial fails a constraint re-check or crashes.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .algorithm import BaselineKind, SolverOptions
from .experiments import (
    PARAMS,
    SweepSpec,
    emit_amplitude_report,
    run_trials,
    sweep,
    write_amplitude_csv,
    write_csv,
    write_jsonl,
    aggregate,
)
from .scenario import ScenarioConfig, load_config

ALL_BASELINES = [b.value for b in BaselineKind]
BENCH_DEFAULT = ["proposed", "ris_noma_split", "ris_noma_double", "ris_oma"]


def _list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _baselines(text: str) -> list:
    if text.strip() == "":
        return []
    names = _list(text)
    for n in names:
        if n not in ALL_BASELINES:
            raise argparse.ArgumentTypeError(f"unknown baseline {n!r}; choose from {', '.join(ALL_BASELINES)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or YAML scenario file")
    common.add_argument("--seed", type=int, default=0, help="first trial seed")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--tol", type=float, default=1e-3, help="inner/outer relative tolerance")
    common.add_argument("--jobs", type=int, default=1, help="parallel trials")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="starnoma", description="STAR-RIS NOMA sum-rate simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="single trial")
    run.add_argument("--baselines", type=_baselines, default=["proposed"])

    sw = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    sw.add_argument("--param", choices=sorted(PARAMS), required=True)
    sw.add_argument("--values", type=_list, required=True, help="comma separated")
    sw.add_argument("--trials", type=int, default=20)
    sw.add_argument("--baselines", type=_baselines, default=["proposed"])

    bench = sub.add_parser("bench", parents=[common], help="compare schemes at one point")
    bench.add_argument("--trials", type=int, default=20)
    bench.add_argument("--baselines", type=_baselines, default=BENCH_DEFAULT)
    return p


def _options(args) -> SolverOptions:
    return SolverOptions(inner_tol=args.tol, outer_tol=args.tol)


def _finish(results, out: Path) -> int:
    bad = [r for r in results if r.error or r.check_failures]
    for r in bad:
        print(f"check failed: {r.baseline} seed={r.seed} {r.error or r.check_failures}", file=sys.stderr)
    return 1 if bad else 0


def _amplitudes(results, out: Path):
    try:
        report = emit_amplitude_report([r for r in results if not r.error])
    except ValueError:
        return
    write_amplitude_csv(report, out / "amplitudes.csv")
    print(f"mean beta_t={report['mean_beta_t']:.4f} mean beta_r={report['mean_beta_r']:.4f}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    base = load_config(args.config) if args.config else ScenarioConfig()
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    options = _options(args)

    if args.command == "run":
        results = run_trials([(base, b, args.seed, options) for b in args.baselines], args.jobs)
        write_jsonl(results, out / "trials.jsonl")
        for r in results:
            print(json.dumps({"baseline": r.baseline, "seed": r.seed, "sum_rate": r.sum_rate, "feasible": r.feasible}))
        return _finish(results, out)

    if args.command == "sweep":
        spec = SweepSpec(args.param, args.values, args.trials, args.baselines, args.seed)
        rows, results = sweep(spec, base, options, args.jobs)
        write_csv(rows, out / "sweep.csv")
        write_jsonl(results, out / "trials.jsonl")
        for r in rows:
            print(f"{r['param']}={r['value']} {r['baseline']}: {r['mean_rate']:.4f} +- {r['stderr']:.4f} (n={r['n']})")
        return _finish(results, out)

    # bench
    seeds = [args.seed + i for i in range(args.trials)]
    tasks = [(base, b, s, options) for b in args.baselines for s in seeds]
    results = run_trials(tasks, args.jobs)
    rows = []
    for b in args.baselines:
        mean, se, n = aggregate([r for r in results if r.baseline == b])
        rows.append({"param": "bench", "value": "default", "baseline": b, "mean_rate": mean, "stderr": se, "n": n})
        print(f"{b}: {mean:.4f} +- {se:.4f} (n={n})")
    write_csv(rows, out / "bench.csv")
    write_jsonl(results, out / "trials.jsonl")
    _amplitudes(results, out)
    return _finish(results, out)


if __name__ == "__main__":
    sys.exit(main())
