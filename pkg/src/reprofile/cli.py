"""Command-line front end: solve one scenario, compare strategies over
instance batches, or sweep a parameter.  Emits JSON results and CSV tables;
all randomness flows through explicit seeds."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

from . import fifo, oracle, scenarios, staticprio
from .network import (
    Scenario,
    Scheduler,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate,
)
from .provision import link_bandwidth

log = logging.getLogger("reprofile")

COMPARE_COLUMNS = ["instance_id", "seed", "scheduler", "classes", "strategy",
                   "total_mbps", "runtime_ms"]
SUMMARY_COLUMNS = ["strategy", "baseline", "n", "mean_improvement",
                   "ci_low", "ci_high"]
SWEEP_COLUMNS = ["param", "value", "scheduler", "classes", "strategy",
                 "total_mbps", "runtime_ms"]


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _effective_scenario(s: Scenario, scheduler: Optional[str],
                        classes: Optional[int], strategy: str) -> Scenario:
    kind = scheduler or s.scheduler.kind
    k = classes if classes is not None else s.scheduler.classes
    if strategy == "gr" and kind == "fifo":
        kind, k = "sp", classes if classes is not None else 1
    if strategy == "nlp" and kind != "fifo":
        raise ValueError("the nlp strategy applies to FIFO scheduling only")
    if strategy in ("fs", "ns") or strategy == "nlp":
        pass
    return s.with_scheduler(Scheduler(kind, k))


def solve_one(s: Scenario, strategy: str, seed: int = 0,
              budget: Optional[int] = None, gamma_grid: int = 11,
              gamma_depth: int = 2, epsilon: float = 1e-3):
    if s.scheduler.is_fifo:
        if strategy == "fs":
            return fifo.fs_solve(s)
        if strategy == "ns":
            return fifo.ns_solve(s)
        if strategy == "nlp":
            return fifo.randomized_search(s, budget=budget, seed=seed)
        raise ValueError(f"strategy {strategy!r} not available under FIFO")
    if strategy == "fs":
        return staticprio.sp_fs_solve(s)
    if strategy == "ns":
        return staticprio.sp_ns_solve(s)
    if strategy == "gr":
        import numpy as np
        grid = tuple(np.linspace(0.0, 1.0, gamma_grid).tolist())
        sched = staticprio.GammaSchedule(grid, gamma_depth)
        return staticprio.greedy_reprofiling(s, sched, eps=epsilon)
    raise ValueError(f"strategy {strategy!r} not available under static priority")


def _per_link_report(s: Scenario, sol) -> Tuple[list, dict]:
    per_link = []
    t_ms: Dict[str, Dict[str, float]] = {}
    if isinstance(sol, fifo.FifoSolution):
        for j in range(s.topology.n):
            per_link.append({
                "id": j,
                "c_mbps": sol.C[j],
                "per_class": [{"class": 1, "c_mbps": sol.C[j],
                               "t_ms": sol.T[j] * 1000.0}],
            })
            t_ms[str(j)] = {"1": sol.T[j] * 1000.0}
        return per_link, t_ms
    states = sol.link_states()
    for j in range(s.topology.n):
        classes = []
        if j in states and states[j].profiles:
            bw = link_bandwidth(states[j])
            for h, cb in enumerate(bw.per_class, start=1):
                classes.append({"class": h, "c_mbps": cb.value,
                                "t_ms": sol.T[j][h - 1] * 1000.0})
        per_link.append({"id": j, "c_mbps": sol.C.get(j, 0.0),
                         "per_class": classes})
        t_ms[str(j)] = {str(c["class"]): c["t_ms"] for c in classes}
    return per_link, t_ms


def result_document(s: Scenario, sol, strategy: str, runtime_ms: float) -> dict:
    per_link, t_ms = _per_link_report(s, sol)
    d_ms = [sol.D[f.id] * 1000.0 for f in sorted(s.flows, key=lambda f: f.id)]
    return {
        "strategy": strategy,
        "total_mbps": sol.total,
        "per_link": per_link,
        "D_ms": d_ms,
        "T_ms": t_ms,
        "feasible": bool(sol.feasible),
        "runtime_ms": runtime_ms,
    }


def cmd_solve(args) -> int:
    try:
        scn = load_scenario(args.scenario)
    except (OSError, ValueError, KeyError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 2
    diags = validate(scn)
    if diags:
        for d in diags:
            print(str(d), file=sys.stderr)
        return 2
    try:
        scn = _effective_scenario(scn, args.scheduler, args.classes, args.strategy)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    sol = solve_one(scn, args.strategy, seed=args.seed, budget=args.budget,
                    gamma_grid=args.gamma_grid, gamma_depth=args.gamma_depth,
                    epsilon=args.epsilon)
    runtime_ms = (time.perf_counter() - t0) * 1000.0
    doc = result_document(scn, sol, args.strategy, runtime_ms)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.oracle:
        try:
            ref = oracle.grid_min_bandwidth_fifo(
                scn.with_scheduler(Scheduler("fifo")), args.oracle_resolution)
        except oracle.OracleSizeError as exc:
            print(f"oracle refused: {exc}", file=sys.stderr)
            return 1
        gap = (sol.total - ref) / ref if ref > 0 else 0.0
        print(f"oracle_total_mbps={ref:.6f} solver_total_mbps={sol.total:.6f} "
              f"relative_gap={gap:+.4%}")
    log.info("solved %s with %s: total=%.3f Mb/s", args.scenario,
             args.strategy, sol.total)
    return 0


# -- compare -----------------------------------------------------------------


def _gen_spec(text: str) -> dict:
    out = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        out[key.strip()] = value.strip()
    return out


def _compare_instances(args) -> List[Tuple[str, int, Scenario]]:
    instances = []
    if args.scenario_dir:
        names = sorted(os.listdir(args.scenario_dir))
        for name in names:
            if not name.endswith(".json"):
                continue
            scn = load_scenario(os.path.join(args.scenario_dir, name))
            instances.append((name, args.seed, scn))
    else:
        spec = _gen_spec(args.parking_lot)
        m = int(spec.get("m", 2))
        n = int(spec.get("n", 2))
        cross = int(spec["cross"]) if "cross" in spec else None
        model = scenarios.model_by_name(spec.get("model", "synthetic"))
        for rep in range(args.repeats):
            seed = args.seed + rep
            scn = scenarios.gen_parking_lot(m, n, cross, model, seed)
            instances.append((f"parking-lot-m{m}-n{n}-r{rep}", seed, scn))
    return instances


def _run_cell(payload):
    doc, strategy, scheduler, classes, seed, budget = payload
    scn = scenario_from_dict(doc)
    scn = _effective_scenario(scn, scheduler, classes, strategy)
    t0 = time.perf_counter()
    try:
        sol = solve_one(scn, strategy, seed=seed, budget=budget)
        total = sol.total if sol.feasible else math.inf
    except Exception as exc:  # recorded per-row, the batch keeps going
        log.warning("solve failed for strategy %s: %s", strategy, exc)
        total = math.inf
    runtime_ms = (time.perf_counter() - t0) * 1000.0
    return scn.scheduler.kind, scn.scheduler.classes, total, runtime_ms


def cmd_compare(args) -> int:
    strategies = [x for x in args.strategies.split(",") if x]
    instances = _compare_instances(args)
    jobs = []
    for name, seed, scn in instances:
        doc = scenario_to_dict(scn)
        for strat in strategies:
            jobs.append((name, seed, strat,
                         (doc, strat, args.scheduler, args.classes, seed,
                          args.budget)))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outputs = list(pool.map(_run_cell, [payload for _, _, _, payload in jobs]))
    else:
        outputs = [_run_cell(payload) for _, _, _, payload in jobs]
    rows = []
    totals: Dict[Tuple[str, str], float] = {}
    for (name, seed, strat, _), (kind, k, total, rt) in zip(jobs, outputs):
        rows.append([name, seed, kind, k, strat, total, rt])
        totals[(name, strat)] = total
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3], r[4]))
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARE_COLUMNS)
        w.writerows(rows)
    if args.summary:
        _write_summary(args.summary, strategies,
                       [name for name, _, _ in instances], totals)
    return 0


def _write_summary(path: str, strategies: Sequence[str],
                   names: Sequence[str], totals: Dict[Tuple[str, str], float]):
    """Pairwise mean relative improvement with a 95% normal-approximation CI."""
    rows = []
    for a in strategies:
        for b in strategies:
            if a == b:
                continue
            imps = []
            for name in names:
                ta, tb = totals.get((name, a)), totals.get((name, b))
                if ta is None or tb is None or not math.isfinite(ta) \
                        or not math.isfinite(tb) or tb <= 0:
                    continue
                imps.append((tb - ta) / tb)
            if not imps:
                continue
            n = len(imps)
            mean = sum(imps) / n
            var = sum((x - mean) ** 2 for x in imps) / n if n > 1 else 0.0
            half = 1.96 * math.sqrt(var / n) if n > 1 else 0.0
            rows.append([a, b, n, mean, mean - half, mean + half])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(rows)


# -- sweep -------------------------------------------------------------------


def _parse_values(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x]


def cmd_sweep(args) -> int:
    scn = load_scenario(args.scenario)
    diags = validate(scn)
    if diags:
        for d in diags:
            print(str(d), file=sys.stderr)
        return 2
    strategies = [x for x in args.strategies.split(",") if x]
    values = _parse_values(args.values)
    rows = []
    for value in values:
        if args.param == "gamma":
            target = _effective_scenario(scn, args.scheduler, args.classes, "gr")
            D, Tt = staticprio.initial_allocation(target, value)
            t0 = time.perf_counter()
            res = staticprio.adjustment(target, D, Tt, eps=args.epsilon,
                                        gamma=value, strategy="gr")
            rt = (time.perf_counter() - t0) * 1000.0
            rows.append(["gamma", value, target.scheduler.kind,
                         target.scheduler.classes, "gr", res.best_total, rt])
            continue
        for strat in strategies:
            if args.param == "omega":
                target = scenarios.scale_deadlines(scn, value)
                target = _effective_scenario(target, args.scheduler,
                                             args.classes, strat)
            elif args.param == "classes":
                target = _effective_scenario(scn, args.scheduler, int(value),
                                             strat)
            else:
                raise ValueError(f"unknown sweep parameter {args.param!r}")
            t0 = time.perf_counter()
            sol = solve_one(target, strat, seed=args.seed, budget=args.budget)
            rt = (time.perf_counter() - t0) * 1000.0
            rows.append([args.param, value, target.scheduler.kind,
                         target.scheduler.classes, strat, sol.total, rt])
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        w.writerows(rows)
    return 0


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="reprofile",
                description="Bandwidth minimization for deadline-constrained "
                            "flows via reprofiling.")
    sub = p.add_subparsers(dest="command", required=True)

    sv = sub.add_parser("solve", help="solve one scenario file")
    sv.add_argument("scenario")
    sv.add_argument("--strategy", required=True, choices=["fs", "ns", "gr", "nlp"])
    sv.add_argument("--scheduler", choices=["fifo", "sp"])
    sv.add_argument("--classes", type=int)
    sv.add_argument("--seed", type=int, default=0)
    sv.add_argument("--budget", type=int, help="orderings explored by nlp")
    sv.add_argument("--gamma-grid", type=int, default=11)
    sv.add_argument("--gamma-depth", type=int, default=2)
    sv.add_argument("--epsilon", type=float, default=1e-3)
    sv.add_argument("--oracle", action="store_true",
                    help="cross-check against the brute-force grid oracle")
    sv.add_argument("--oracle-resolution", type=float, default=0.1)
    sv.add_argument("--output", "-o")
    sv.set_defaults(func=cmd_solve)

    cp = sub.add_parser("compare", help="run strategies over an instance batch")
    src = cp.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario-dir")
    src.add_argument("--parking-lot",
                     help="generator spec, e.g. m=20,n=3,cross=20,model=synthetic")
    cp.add_argument("--strategies", required=True)
    cp.add_argument("--scheduler", choices=["fifo", "sp"])
    cp.add_argument("--classes", type=int)
    cp.add_argument("--repeats", type=int, default=1)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--budget", type=int)
    cp.add_argument("--jobs", type=int, default=1)
    cp.add_argument("--output", "-o", required=True)
    cp.add_argument("--summary")
    cp.set_defaults(func=cmd_compare)

    sw = sub.add_parser("sweep", help="sweep gamma, omega, or the class count")
    sw.add_argument("scenario")
    sw.add_argument("--param", required=True, choices=["gamma", "omega", "classes"])
    sw.add_argument("--values", required=True,
                    help="comma-separated parameter values")
    sw.add_argument("--strategies", default="fs")
    sw.add_argument("--scheduler", choices=["fifo", "sp"])
    sw.add_argument("--classes", type=int)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--budget", type=int)
    sw.add_argument("--epsilon", type=float, default=1e-3)
    sw.add_argument("--output", "-o", required=True)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("REPROFILE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
