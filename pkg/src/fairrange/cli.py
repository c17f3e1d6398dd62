"""Command-line entry point: solve, generate, eval, bench."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from .embeddings import poly_approx_solve
from .fpt import fpt_solve
from .instance import (InfeasibleError, Instance, Solution, WorkCapExceeded, check_feasibility,
                       dump_instance, evaluate_cost, greedy_feasible, instance_from_dict,
                       solution_from_dict, solution_to_dict, validate_instance)
from .assignment import optimal_assignment
from .metric import MetricError
from .oracle import DEFAULT_WORK_CAP, brute_force_solve, gen_random_instance
from .sat import CnfError, gen_gap_sat_reduction, gen_sat_reduction, read_cnf
from .tree_dp import dp_solve

log = logging.getLogger("fairrange")

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_WORKCAP = 0, 2, 3, 4
ALGOS = ("tree-dp", "poly-approx", "fpt", "oracle", "greedy")


class CliError(Exception):
    def __init__(self, message, code=EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


@dataclass
class RunReport:
    instance: str
    digest: str
    solver: str
    params: dict
    cost: float
    feasible: bool
    time_ms: float
    seed: int
    counts: list
    centers: list


def load_checked(path, objective=None) -> Instance:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"cannot read instance {path}: {e}")
    if objective is not None:
        if "objective" in doc and doc["objective"] != objective:
            raise CliError(f"--objective {objective} conflicts with objective "
                           f"{doc['objective']!r} in {path}")
        doc["objective"] = objective
    try:
        inst = instance_from_dict(doc)
    except (KeyError, ValueError, TypeError) as e:
        raise CliError(f"invalid instance {path}: {e}")
    warnings: list = []
    problems = validate_instance(inst, warnings)
    for w in warnings:
        log.warning("%s: %s", path, w)
    if problems:
        raise CliError(f"invalid instance {path}: " + "; ".join(problems))
    return inst


def run_algo(inst: Instance, algo: str, eps=0.2, trials=32, swaps=1, seed=0, at_most=False,
             work_cap=DEFAULT_WORK_CAP, coreset="identity", coreset_size=None, progress=None) -> Solution:
    if algo == "oracle":
        return brute_force_solve(inst, at_most=at_most, work_cap=work_cap)
    if algo == "tree-dp":
        if inst.metric.kind != "tree":
            raise CliError("tree metric required")
        return dp_solve(inst, exact_k=not at_most)
    if algo == "poly-approx":
        return poly_approx_solve(inst, trials=trials, p=swaps, seed=seed, exact_k=not at_most)
    if algo == "fpt":
        return fpt_solve(inst, eps, coreset=coreset, coreset_size=coreset_size, seed=seed,
                         progress=progress)
    if algo == "greedy":
        centers = greedy_feasible(inst)
        if centers is None:
            raise InfeasibleError("greedy found no fair-range feasible set", reason="fair-range")
        return optimal_assignment(inst, centers)
    raise CliError(f"unknown algorithm {algo!r}")


def make_report(path, inst, algo, params, sol, elapsed, seed) -> RunReport:
    cost = evaluate_cost(inst, sol)
    if abs(cost - sol.cost) > 1e-9 * max(1.0, abs(cost)):
        raise AssertionError(f"reported cost {sol.cost} differs from re-evaluated {cost}")
    rep = check_feasibility(inst, sol.centers, at_most=params.get("at_most", False))
    return RunReport(str(path), inst.digest(), algo, params, cost, rep.ok, round(elapsed * 1000, 3),
                     seed, list(rep.counts), list(sol.centers))


# --------------------------------------------------------------------------
# subcommands

def cmd_solve(args) -> int:
    inst = load_checked(args.inp, args.objective)
    progress = (lambda line: print(line, file=sys.stderr)) if args.progress else None
    params = {"eps": args.eps, "trials": args.trials, "baseline_swaps": args.baseline_swaps,
              "at_most": args.at_most, "coreset": args.coreset}
    t0 = time.perf_counter()
    sol = run_algo(inst, args.algo, args.eps, args.trials, args.baseline_swaps, args.seed,
                   args.at_most, args.work_cap, args.coreset, args.coreset_size, progress)
    elapsed = time.perf_counter() - t0
    report = make_report(args.inp, inst, args.algo, params, sol, elapsed, args.seed)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(solution_to_dict(sol), fh, indent=1, default=str)
    text = json.dumps(asdict(report), indent=1, default=str)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.type == "random":
        inst = gen_random_instance(args.n, args.k, args.t, (args.cap_lo, args.cap_hi), args.metric,
                                   args.seed, args.objective or "median")
        dump_instance(inst, args.out)
        return EXIT_OK
    if not args.cnf:
        raise CliError("--cnf is required for sat and gap-sat")
    phi = read_cnf(args.cnf)
    if args.type == "sat":
        art = gen_sat_reduction(phi, args.D, args.bounds, args.s_weight)
    else:
        if args.kappa is None:
            raise CliError("--kappa is required for gap-sat")
        art = gen_gap_sat_reduction(phi, args.kappa, args.D, args.var_cap, args.bounds, args.s_weight)
    dump_instance(art.instance, args.out)
    prov = args.provenance or str(Path(args.out).with_suffix(".provenance.json"))
    with open(prov, "w") as fh:
        json.dump({"mode": art.mode, "bounds": art.bounds, "D": art.D, "notes": art.notes,
                   "blocks": [list(b) for b in art.blocks], "facilities": art.provenance_rows()},
                  fh, indent=1)
    return EXIT_OK


def cmd_eval(args) -> int:
    inst = load_checked(args.inp, args.objective)
    with open(args.solution) as fh:
        doc = json.load(fh)
    sol = solution_from_dict(doc)
    missing = [f for f in sol.centers if f not in inst.facility_index]
    if missing:
        raise CliError(f"solution centers are not facilities: {missing}")
    try:
        cost = evaluate_cost(inst, sol)
    except ValueError as e:
        raise CliError(str(e))
    rep = check_feasibility(inst, sol.centers, at_most=args.at_most)
    loads: dict = {}
    for (c, f), q in sol.mu.items():
        loads[f] = loads.get(f, 0) + q
    over = [f for f, q in loads.items() if q > inst.capacities[f]]
    out = {"cost": cost, "stored_cost": sol.cost, "counts": list(rep.counts),
           "fair_range_ok": list(rep.fair_range_ok), "size_ok": rep.size_ok,
           "capacity_ok": rep.capacity_ok and not over, "assignment_ok": rep.assignment_ok,
           "overloaded": over}
    print(json.dumps(out, indent=1))
    if abs(cost - sol.cost) > 1e-9 * max(1.0, abs(cost)):
        print(f"cost mismatch: stored {sol.cost}, evaluated {cost}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK if rep.ok and not over else EXIT_INFEASIBLE


BENCH_COLUMNS = ["instance", "algo", "cost", "ratio_vs_oracle", "time_ms", "feasible"]


def _bench_cell(job):
    path, algo, opts = job
    inst = load_checked(path)
    t0 = time.perf_counter()
    try:
        sol = run_algo(inst, algo, opts["eps"], opts["trials"], opts["swaps"], opts["seed"],
                       work_cap=opts["work_cap"])
        rep = check_feasibility(inst, sol.centers, at_most=False)
        cost, feasible = sol.cost, rep.ok
    except (InfeasibleError, CliError):
        cost, feasible = None, False
    except WorkCapExceeded:
        cost, feasible = None, None
    return path, algo, cost, feasible, (time.perf_counter() - t0) * 1000


def cmd_bench(args) -> int:
    corpus = sorted(Path(args.corpus).glob("*.json"))
    corpus = [p for p in corpus if not p.name.endswith(".provenance.json")]
    if not corpus:
        raise CliError(f"no instances in {args.corpus}")
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGOS]
    if bad:
        raise CliError(f"unknown algorithms {bad}")
    opts = {"eps": args.eps, "trials": args.trials, "swaps": args.baseline_swaps, "seed": args.seed,
            "work_cap": args.work_cap}
    jobs = [(str(p), a, opts) for p in corpus for a in algos]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_bench_cell, jobs))
    else:
        results = [_bench_cell(j) for j in jobs]
    oracle = {p: c for p, a, c, _, _ in results if a == "oracle" and c is not None}

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for path, algo, cost, feasible, ms in results:
        ratio = ""
        if cost is not None and path in oracle:
            o = oracle[path]
            ratio = f"{cost / o:.6f}" if o > 0 else ("1.000000" if cost == 0 else "inf")
        w.writerow([Path(path).name, algo, "" if cost is None else f"{cost:.6f}", ratio,
                    "" if args.no_timing else f"{ms:.1f}",
                    "" if feasible is None else str(feasible).lower()])
    if args.csv == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(args.csv).write_text(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairrange", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--algo", choices=ALGOS, required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out")
    s.add_argument("--report", help="also write the run report here")
    s.add_argument("--eps", type=float, default=0.2)
    s.add_argument("--trials", type=int, default=32)
    s.add_argument("--baseline-swaps", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--objective", choices=("median", "means"))
    s.add_argument("--at-most", action="store_true", help="allow fewer than k centers")
    s.add_argument("--work-cap", type=int, default=DEFAULT_WORK_CAP)
    s.add_argument("--coreset", choices=("identity", "sample"), default="identity")
    s.add_argument("--coreset-size", type=int)
    s.add_argument("--progress", action="store_true", help="stream search statistics to stderr")
    s.set_defaults(func=cmd_solve)

    g = sub.add_parser("generate", help="write a generated instance")
    g.add_argument("--type", choices=("random", "sat", "gap-sat"), required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--t", type=int, default=1)
    g.add_argument("--cap-lo", type=int, default=1)
    g.add_argument("--cap-hi", type=int, default=4)
    g.add_argument("--metric", choices=("graph", "matrix", "tree"), default="graph")
    g.add_argument("--objective", choices=("median", "means"))
    g.add_argument("--cnf")
    g.add_argument("--D", type=float, default=100)
    g.add_argument("--s-weight", type=float)
    g.add_argument("--bounds", choices=("range", "lower-only"), default="range")
    g.add_argument("--kappa", type=int)
    g.add_argument("--var-cap", type=int, default=20)
    g.add_argument("--provenance")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("eval", help="check a solution file against an instance")
    e.add_argument("--in", dest="inp", required=True)
    e.add_argument("--solution", required=True)
    e.add_argument("--objective", choices=("median", "means"))
    e.add_argument("--at-most", action="store_true")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="run algorithms over a corpus and write CSV")
    b.add_argument("--corpus", required=True)
    b.add_argument("--algos", default="oracle,fpt,poly-approx")
    b.add_argument("--csv", default="-")
    b.add_argument("--eps", type=float, default=0.2)
    b.add_argument("--trials", type=int, default=32)
    b.add_argument("--baseline-swaps", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--work-cap", type=int, default=DEFAULT_WORK_CAP)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--no-timing", action="store_true", help="leave time_ms empty for reproducible output")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (MetricError, CnfError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleError as e:
        print(f"infeasible ({e.reason}): {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except WorkCapExceeded as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_WORKCAP


if __name__ == "__main__":
    sys.exit(main())
