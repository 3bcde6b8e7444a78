"""Command-line driver: ``solve``, ``generate`` and ``discretize``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .detequiv import InvalidTree, build_deterministic_equivalent
from .lpcore import DEFAULT_TOL, LPError, solve_lp
from .lshaped import run_lshaped
from .nested import run_nested
from .result import SolveLimit, SolveResult
from .scenario import BadParam, BadSpec, ScenarioTree, TreeSpec, discretize_normal, generate_random_tree, validate
from .trace import SolveTrace

EXIT_CODES = {"optimal": 0, "infeasible": 2, "unbounded": 3, "limit": 4}


class UsageError(Exception):
    pass


def _solve_detequiv(tree: ScenarioTree) -> SolveResult:
    lp, var_map = build_deterministic_equivalent(tree)
    sol = solve_lp(lp)
    trace = SolveTrace()
    trace.solve("detequiv", 0, sol.status, sol.objective if sol.optimal else None, sol.primal if sol.optimal else None)
    res = SolveResult(sol.status.value, iterations=sol.iterations, trace=trace)
    if sol.optimal:
        res.objective = sol.objective
        res.decisions = {i: sol.primal[a:b] for i, (a, b) in var_map.items()}
        res.lower = res.upper = sol.objective
        trace.bounds(res.lower, res.upper)
    trace.terminate(f"single LP {sol.status.value}")
    return res


def _load_tree(path: str) -> ScenarioTree:
    try:
        with open(path, encoding="utf-8") as f:
            tree = ScenarioTree.from_json(f.read())
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from e
    except (BadSpec, ValueError, KeyError, TypeError) as e:
        raise UsageError(f"cannot parse {path}: {e}") from e
    problems = validate(tree)
    if problems:
        raise UsageError("invalid tree: " + "; ".join(f"node {v.node_id}: {v.reason}" for v in problems))
    return tree


def cmd_solve(args) -> int:
    tree = _load_tree(args.input)
    tol = replace(DEFAULT_TOL, gap=args.tol)
    try:
        if args.method == "detequiv":
            res = _solve_detequiv(tree)
        elif args.method == "lshaped":
            if tree.num_stages > 2:
                raise UsageError(f"lshaped needs at most two stages, tree has {tree.num_stages}")
            res = run_lshaped(tree, args.cuts, tol, max_iters=args.max_iters, workers=args.workers)
        else:
            res = run_nested(tree, args.protocol, args.cuts, tol, max_passes=args.max_iters, workers=args.workers)
    except SolveLimit as e:
        print(str(e), file=sys.stderr)
        res = e.result
    except LPError as e:
        print(f"solver error: {e}", file=sys.stderr)
        res = SolveResult("limit")
    text = json.dumps(res.report(), indent=2) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as f:
            f.write(res.trace.to_jsonl())
    return EXIT_CODES[res.status]


def cmd_generate(args) -> int:
    spec = TreeSpec(args.stages, args.branching, args.vars, args.rows, args.seed, args.infeas_frac)
    try:
        tree = generate_random_tree(spec)
    except (BadParam, BadSpec) as e:
        raise UsageError(str(e)) from e
    sys.stdout.write(tree.to_json() + "\n")
    return 0


def cmd_discretize(args) -> int:
    method = "stratified" if args.seed is None else "monte_carlo"
    try:
        pts = discretize_normal(args.mean, args.std, args.n, method, args.seed)
    except BadParam as e:
        raise UsageError(str(e)) from e
    sys.stdout.write(json.dumps([{"value": v, "prob": p} for v, p in pts]) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochbenders", description="Benders decomposition for stochastic linear programs")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a scenario tree file")
    s.add_argument("--input", required=True)
    s.add_argument("--method", choices=["detequiv", "lshaped", "nested"], default="nested")
    s.add_argument("--protocol", choices=["ff", "fb", "fffb"], default="fffb")
    s.add_argument("--cuts", choices=["uni", "multi"], default="uni")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iters", type=int, default=500)
    s.add_argument("--workers", type=int, default=None, help="threads for sub-problem solves")
    s.add_argument("--trace", help="write the solve trace as JSON lines")
    s.add_argument("--output", help="write the report here instead of stdout")
    s.set_defaults(func=cmd_solve)

    g = sub.add_parser("generate", help="write a seeded random tree as JSON")
    g.add_argument("--stages", type=int, required=True)
    g.add_argument("--branching", type=int, required=True)
    g.add_argument("--vars", type=int, required=True)
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--infeas-frac", type=float, default=0.0)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("discretize", help="discretize a normal distribution")
    d.add_argument("--mean", type=float, required=True)
    d.add_argument("--std", type=float, required=True)
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--seed", type=int, default=None, help="Monte Carlo sampling with this seed")
    d.set_defaults(func=cmd_discretize)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return args.func(args)
    except (UsageError, InvalidTree) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
