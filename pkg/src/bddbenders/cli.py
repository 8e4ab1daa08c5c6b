"""Command-line entry point.

    bddbenders generate --n 30 --density 0.5 --seed 1 --out g30.txt
    bddbenders solve --instance g30.txt --scenarios 100 --method bdd-cost --pure-benders
    bddbenders compare --instances dir/ --methods bdd-cap,bdd-cost,lshaped --out runs.csv
    bddbenders saa --instance g30.txt --counts 10,50,100 --reps 5 --eval 2000 --out saa.csv

Exit codes: 0 optimal, 2 time or node limit, 3 infeasible, 4 usage, 5 resource.
Budgets can also be set through BDDBENDERS_NODE_BUDGET, BDDBENDERS_MEMORY_BUDGET
(bytes) and BDDBENDERS_TIME_LIMIT (seconds); explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import smwds
from .benders import METHODS, CvarConfig, Options, ParameterError, solve_cvar, solve_risk_neutral
from .cuts import CutKind
from .diagram import DEFAULT_NODE_BUDGET, ResourceError, build_cap_bdd, build_cost_bdd, dump_bdd
from .model import Mode, ModelError, format_number
from .solver import Status

EXIT_OK, EXIT_LIMIT, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_RESOURCE = 0, 2, 3, 4, 5
DEFAULT_MEMORY_BUDGET = 4 * 1024 ** 3

REPORT_FIELDS = [
    "instance", "method", "pure_benders", "cvar", "lambda", "alpha", "scenarios", "scenario_seed",
    "status", "objective", "bound", "gap", "wall_time", "bdd_build_time",
    "mean_bdd_nodes", "mean_bdd_arcs", "nodes",
] + [f"cuts_{k.value}" for k in CutKind] + ["x"]

TIMING = {"wall_time", "bdd_build_time"}


class UsageError(Exception):
    pass


@dataclass
class RunReport:
    instance: str
    method: str
    pure_benders: bool
    cvar: bool = False
    lam: float | None = None
    alpha: float | None = None
    scenarios: int = 0
    scenario_seed: int = 0
    status: str = ""
    objective: object = None
    bound: float | None = None
    wall_time: float = 0.0
    build_time: float = 0.0
    mean_nodes: float | None = None
    mean_arcs: float | None = None
    nodes: int = 0
    cuts: dict = field(default_factory=dict)
    x: tuple = ()

    @property
    def gap(self) -> float | None:
        if self.objective is None or self.bound is None:
            return None
        ub = float(self.objective)
        return max(0.0, (ub - self.bound) / max(abs(ub), 1.0))

    def row(self) -> list:
        def num(v, fmt="{:.6f}"):
            return "" if v is None else fmt.format(v)

        return [
            self.instance, self.method, int(self.pure_benders), int(self.cvar),
            "" if self.lam is None else self.lam, "" if self.alpha is None else self.alpha,
            self.scenarios, self.scenario_seed, self.status,
            "" if self.objective is None else format_number(self.objective),
            num(self.bound), num(self.gap), f"{self.wall_time:.3f}", f"{self.build_time:.3f}",
            num(self.mean_nodes, "{:.2f}"), num(self.mean_arcs, "{:.2f}"), self.nodes,
        ] + [self.cuts.get(k.value, 0) for k in CutKind] + ["".join(str(b) for b in self.x)]


def write_rows(path, rows, header, append=True) -> None:
    """Append CSV rows, writing the header when the file is new or empty."""
    if path is None or str(path) == "-":
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)
        return
    path = Path(path)
    fresh = not append or not path.exists() or path.stat().st_size == 0
    with open(path, "w" if not append else "a", newline="") as fh:
        w = csv.writer(fh)
        if fresh:
            w.writerow(header)
        w.writerows(rows)


# ----------------------------------------------------------------- budgets


def _env_number(name, cast):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"{name}={raw!r} is not a number") from None


def _budgets(args):
    node = args.node_budget if args.node_budget is not None else _env_number("BDDBENDERS_NODE_BUDGET", int)
    mem = args.memory_budget if args.memory_budget is not None else _env_number("BDDBENDERS_MEMORY_BUDGET", int)
    tl = args.time_limit if args.time_limit is not None else _env_number("BDDBENDERS_TIME_LIMIT", float)
    return node or DEFAULT_NODE_BUDGET, mem or DEFAULT_MEMORY_BUDGET, tl


# ------------------------------------------------------------------- solve


def _mode_for(method: str) -> Mode:
    return Mode.CAPACITY if method == "bdd-cap" else Mode.COST


def run_solve(instance_path, scenarios: int, scenario_seed: int, method: str, pure_benders: bool,
              cvar: CvarConfig | None, time_limit, node_budget, memory_budget, dump=None) -> RunReport:
    """One decomposition run; resource failures come back as a report, not an exception."""
    inst = smwds.load_instance(instance_path)
    sample = smwds.sample_scenarios(inst, scenarios, scenario_seed)
    sp = smwds.build_program(inst, sample, _mode_for(method))
    rep = RunReport(inst.name, method, pure_benders, cvar is not None,
                    None if cvar is None else cvar.lam, None if cvar is None else cvar.alpha,
                    scenarios, scenario_seed)
    if dump is not None:
        if method == "lshaped":
            raise UsageError("--dump-bdd needs a BDD method")
        build = build_cap_bdd if method == "bdd-cap" else build_cost_bdd
        with open(dump, "w") as fh:
            for s in sp.scenarios:
                fh.write(f"# scenario {s.id}\n")
                fh.write(dump_bdd(build(s, node_budget=node_budget)))
    opts = Options(pure_benders=pure_benders, time_limit=time_limit,
                   node_budget=node_budget, memory_budget=memory_budget)
    start = time.perf_counter()
    try:
        sol = solve_cvar(sp, method, cvar, opts) if cvar is not None else solve_risk_neutral(sp, method, opts)
    except ResourceError:
        rep.status = "memory-limit"
        rep.wall_time = time.perf_counter() - start
        return rep
    rep.wall_time = time.perf_counter() - start
    rep.status = sol.status.value
    rep.objective = sol.objective
    rep.bound = sol.bound
    rep.build_time = sol.stats["build_time"]
    if sol.stats["bdd_nodes"]:
        rep.mean_nodes = sum(sol.stats["bdd_nodes"]) / len(sol.stats["bdd_nodes"])
        rep.mean_arcs = sum(sol.stats["bdd_arcs"]) / len(sol.stats["bdd_arcs"])
    rep.nodes = sol.stats.get("nodes", sol.stats.get("iterations", 0))
    rep.cuts = dict(sol.stats["cuts"])
    rep.x = sol.x or ()
    return rep


def exit_code(status: str) -> int:
    return {
        Status.OPTIMAL.value: EXIT_OK,
        Status.LIMIT.value: EXIT_LIMIT,
        Status.INFEASIBLE.value: EXIT_INFEASIBLE,
        "memory-limit": EXIT_RESOURCE,
    }.get(status, EXIT_RESOURCE)


def _cvar_from(args) -> CvarConfig | None:
    if not args.cvar:
        if args.lam is not None or args.alpha is not None:
            raise UsageError("--lambda and --alpha need --cvar")
        return None
    if args.lam is None or args.alpha is None:
        raise UsageError("--cvar needs --lambda and --alpha")
    return CvarConfig(args.lam, args.alpha)


def cmd_generate(args) -> int:
    inst = smwds.generate_instance(args.n, args.density, args.seed)
    text = smwds.dumps_instance(inst)
    if args.out is None or args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_OK


def cmd_solve(args) -> int:
    node, mem, tl = _budgets(args)
    rep = run_solve(args.instance, args.scenarios, args.scenario_seed, args.method, args.pure_benders,
                    _cvar_from(args), tl, node, mem, args.dump_bdd)
    write_rows(args.out, [rep.row()], REPORT_FIELDS)
    if args.out not in (None, "-"):
        obj = "-" if rep.objective is None else format_number(rep.objective)
        print(f"{rep.status} objective {obj} bound {rep.bound} time {rep.wall_time:.2f}s")
    return exit_code(rep.status)


def _compare_one(job):
    path, method, (count, seed, pb, tl, node, mem) = job
    try:
        return run_solve(path, count, seed, method, pb, None, tl, node, mem).row()
    except Exception as exc:  # recorded per row, the batch goes on
        rep = RunReport(Path(path).stem, method, pb, scenarios=count, scenario_seed=seed)
        rep.status = f"error: {type(exc).__name__}: {exc}"
        return rep.row()


def cmd_compare(args) -> int:
    node, mem, tl = _budgets(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown method(s) {', '.join(bad) or '(none)'}")
    folder = Path(args.instances)
    if not folder.is_dir():
        raise UsageError(f"{folder} is not a directory")
    files = sorted(p for p in folder.iterdir() if p.is_file() and p.suffix in (".txt", ".smwds"))
    common = (args.scenarios, args.scenario_seed, args.pure_benders, tl, node, mem)
    jobs = [(str(p), m, common) for p in files for m in methods]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_compare_one, jobs))
    else:
        rows = [_compare_one(j) for j in jobs]
    write_rows(args.out, rows, REPORT_FIELDS, append=False)
    return EXIT_OK


def cmd_saa(args) -> int:
    counts = _int_list(args.counts)
    inst = smwds.load_instance(args.instance)
    eval_size = None if args.eval in ("train", "0") else int(args.eval)
    node, mem, tl = _budgets(args)
    opts = Options(pure_benders=True, time_limit=tl, node_budget=node, memory_budget=mem)
    rows = smwds.saa_analysis(inst, counts, args.reps, eval_size, seed=args.seed, method=args.method, options=opts)
    write_rows(args.out, smwds.saa_table(rows), smwds.SAA_FIELDS, append=False)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None
    if not out or any(v < 1 for v in out):
        raise UsageError("counts must be positive integers")
    return out


# ------------------------------------------------------------------ parser


def _add_budget_flags(p):
    p.add_argument("--time-limit", type=float, default=None, help="seconds for the solve phase")
    p.add_argument("--node-budget", type=int, default=None, help=f"BDD nodes per scenario (default {DEFAULT_NODE_BUDGET})")
    p.add_argument("--memory-budget", type=int, default=None, help="estimated bytes over all BDDs (default 4 GiB)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bddbenders", description="Decision-diagram Benders decomposition for SMWDS.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--density", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--scenarios", type=int, required=True)
    s.add_argument("--scenario-seed", type=int, default=0)
    s.add_argument("--method", choices=METHODS, default="bdd-cost")
    s.add_argument("--pure-benders", action="store_true")
    s.add_argument("--cvar", action="store_true")
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--dump-bdd", default=None, metavar="FILE")
    s.add_argument("--out", default=None, help="report CSV (appended); stdout if omitted")
    s.add_argument("--jobs", type=int, default=1)
    _add_budget_flags(s)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="run several methods over a folder of instances")
    c.add_argument("--instances", required=True)
    c.add_argument("--methods", default=",".join(METHODS))
    c.add_argument("--scenarios", type=int, default=10)
    c.add_argument("--scenario-seed", type=int, default=0)
    c.add_argument("--pure-benders", action="store_true")
    c.add_argument("--out", default=None)
    c.add_argument("--jobs", type=int, default=1)
    _add_budget_flags(c)
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("saa", help="sample average approximation table")
    a.add_argument("--instance", required=True)
    a.add_argument("--counts", required=True, help="comma separated sample sizes")
    a.add_argument("--reps", type=int, default=5)
    a.add_argument("--eval", default="1000", help="evaluation sample size, or 'train'")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--method", choices=("bdd-cap", "bdd-cost"), default="bdd-cost")
    a.add_argument("--out", default=None)
    a.add_argument("--jobs", type=int, default=1)
    _add_budget_flags(a)
    a.set_defaults(func=cmd_saa)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ParameterError, smwds.GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
