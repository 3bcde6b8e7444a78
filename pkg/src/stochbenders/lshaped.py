"""Two-stage Benders decomposition (the L-shaped method).

Sub-problems have the form ``min q@v  s.t.  W@v + T@y (rel) h,  v >= 0``
for a parent decision ``y``.  Feasibility cuts ``D@y >= d`` come from the
slack-augmented auxiliary problem, optimality cuts ``theta >= g - G@y`` from
sub-problem duals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lpcore import DEFAULT_TOL, LinearProgram, Status, Tolerances, solve_lp
from .result import SolveLimit, SolveResult, pmap
from .scenario import NodeProblem, ScenarioTree
from .trace import SolveTrace

AGGREGATE = "aggregate"
COEF_TOL = 1e-9


class DegenerateCut(ValueError):
    """The auxiliary dual gives a zero cut row: the sub-problem is infeasible for every parent decision."""


@dataclass
class FeasibilityCut:
    D: np.ndarray
    d: float
    source: object = None
    iteration: int = 0

    def holds(self, y, tol=0.0) -> bool:
        return float(self.D @ y) >= self.d - tol

    def same_as(self, other) -> bool:
        return (
            isinstance(other, FeasibilityCut)
            and self.D.shape == other.D.shape
            and np.allclose(self.D, other.D, rtol=0, atol=COEF_TOL)
            and abs(self.d - other.d) <= COEF_TOL
        )


@dataclass
class OptimalityCut:
    G: np.ndarray
    g: float
    target: object = AGGREGATE
    iteration: int = 0

    def value(self, y) -> float:
        return self.g - float(self.G @ y)

    def same_as(self, other) -> bool:
        return (
            isinstance(other, OptimalityCut)
            and self.target == other.target
            and self.G.shape == other.G.shape
            and np.allclose(self.G, other.G, rtol=0, atol=COEF_TOL)
            and abs(self.g - other.g) <= COEF_TOL
        )


@dataclass
class CutPool:
    feasibility: list = field(default_factory=list)
    optimality: list = field(default_factory=list)

    def add(self, cut) -> bool:
        """Store ``cut`` unless an equal one is already present."""
        bucket = self.feasibility if isinstance(cut, FeasibilityCut) else self.optimality
        if any(cut.same_as(c) for c in bucket):
            return False
        bucket.append(cut)
        return True

    @property
    def r(self) -> int:
        return len(self.feasibility)

    @property
    def s(self) -> int:
        return len(self.optimality)

    def targets(self) -> list:
        found = {c.target for c in self.optimality}
        if AGGREGATE in found:
            return [AGGREGATE] + sorted(t for t in found if t != AGGREGATE)
        return sorted(found)

    def copy(self) -> "CutPool":
        return CutPool(list(self.feasibility), list(self.optimality))


@dataclass
class MasterState:
    iteration: int = 0
    y: Optional[np.ndarray] = None
    theta: dict = field(default_factory=dict)
    lower: Optional[float] = None
    upper: Optional[float] = None


def node_lp(node: NodeProblem, pool: CutPool, parent_decision=None):
    """Node problem plus its cuts.

    Columns are the node's own variables followed by one free theta per cut
    target.  Rows are the node rows, then feasibility cuts, then optimality
    cuts.  Returns ``(lp, targets)``.
    """
    n = node.num_vars
    targets = pool.targets()
    k = len(targets)
    col = {t: n + i for i, t in enumerate(targets)}
    blocks = [np.hstack([node.W, np.zeros((node.num_rows, k))])]
    rhs = [node.rhs_at(parent_decision)]
    rel = list(node.relations)
    if pool.feasibility:
        blocks.append(np.hstack([np.array([c.D for c in pool.feasibility]), np.zeros((pool.r, k))]))
        rhs.append(np.array([c.d for c in pool.feasibility]))
        rel += ["ge"] * pool.r
    if pool.optimality:
        rows = np.zeros((pool.s, n + k))
        for i, c in enumerate(pool.optimality):
            rows[i, :n] = c.G
            rows[i, col[c.target]] = 1.0
        blocks.append(rows)
        rhs.append(np.array([c.g for c in pool.optimality]))
        rel += ["ge"] * pool.s
    lp = LinearProgram(
        "min",
        np.concatenate([node.q, np.ones(k)]),
        np.vstack(blocks),
        rel,
        np.concatenate(rhs),
        ("nonneg",) * n + ("free",) * k,
    )
    return lp, targets


def build_master(root: NodeProblem, pool: CutPool, mode: str = "uni") -> LinearProgram:
    """Master problem: root rows, feasibility cuts and theta rows.

    ``mode`` only matters through the cut targets already in ``pool``; a
    theta column appears once some optimality cut refers to it.
    """
    return node_lp(root, pool)[0]


@dataclass
class FeasibilityResult:
    feasible: bool
    violation: float
    sigma: Optional[np.ndarray] = None


def solve_feasibility_problem(sub: NodeProblem, y, extra=None, tol: Tolerances = DEFAULT_TOL) -> FeasibilityResult:
    """Minimize total slack ``sum(v+ + v-)`` with ``W v + v+ - v- (rel) h - T y``.

    ``extra`` optionally appends ``(D, d)`` rows ``D v >= d`` (feasibility cuts
    already held by ``sub``); ``sigma`` then covers those rows too.
    """
    W = sub.W
    rhs = sub.rhs_at(y)
    rel = list(sub.relations)
    if extra is not None and len(extra[1]):
        W = np.vstack([W, extra[0]])
        rhs = np.concatenate([rhs, extra[1]])
        rel += ["ge"] * len(extra[1])
    m, n = W.shape
    I = np.eye(m)
    lp = LinearProgram("min", np.concatenate([np.zeros(n), np.ones(2 * m)]), np.hstack([W, I, -I]), rel, rhs)
    sol = solve_lp(lp, tol)
    if not sol.optimal:
        raise RuntimeError(f"auxiliary feasibility problem returned {sol.status.value}")
    V = sol.objective
    if V <= tol.feas:
        return FeasibilityResult(True, V)
    return FeasibilityResult(False, V, sol.duals)


def make_feasibility_cut(sigma, sub: NodeProblem, extra_rhs=None, source=None, iteration: int = 0) -> FeasibilityCut:
    """Turn ``sigma'(h - T y) <= 0`` into ``D y >= d``."""
    sigma = np.asarray(sigma, dtype=float)
    m = sub.num_rows
    D = sigma[:m] @ sub.T if sub.T is not None else np.zeros(0)
    d = float(sigma[:m] @ sub.h)
    if extra_rhs is not None and len(extra_rhs):
        d += float(sigma[m:] @ np.asarray(extra_rhs))
    if D.size == 0 or np.linalg.norm(D) <= 1e-12:
        raise DegenerateCut(f"node {source}: zero feasibility cut, infeasible for every parent decision")
    return FeasibilityCut(D, d, source if source is not None else sub.node_id, iteration)


def make_optimality_cut(duals, probs, subs, mode: str = "uni", consts=None, iteration: int = 0) -> list:
    """Optimality cut(s) from per-scenario duals.

    ``consts[k]`` adds the dual-weighted right-hand side of rows that do not
    depend on the parent decision (cuts held by the sub-problem itself).
    """
    consts = consts if consts is not None else [0.0] * len(subs)
    parts = []
    for pi, p, sub, const in zip(duals, probs, subs, consts):
        pi = np.asarray(pi, dtype=float)[: sub.num_rows]
        parts.append((p * (float(pi @ sub.h) + const), p * (pi @ sub.T), sub.node_id))
    if mode == "multi":
        return [OptimalityCut(G, g, nid, iteration) for g, G, nid in parts]
    g = sum(pt[0] for pt in parts)
    G = np.sum([pt[1] for pt in parts], axis=0)
    return [OptimalityCut(G, g, AGGREGATE, iteration)]


def cut_satisfied(cut: OptimalityCut, theta: dict, y, tol: float) -> bool:
    t = theta.get(cut.target)
    return t is not None and t >= cut.value(y) - tol


def termination_check(state: MasterState, fresh: list, tol: float = DEFAULT_TOL.gap) -> bool:
    """True iff every fresh optimality cut already holds at ``(y_i, theta_i)``."""
    if state.y is None:
        return False
    return all(cut_satisfied(c, state.theta, state.y, tol) for c in fresh)


def theta_complete(targets, children, mode) -> bool:
    if mode == "uni":
        return AGGREGATE in targets or not children
    return set(children) <= set(targets)


def run_lshaped(
    tree: ScenarioTree,
    mode: str = "uni",
    tol: Tolerances = DEFAULT_TOL,
    max_iters: int = 500,
    workers: Optional[int] = None,
) -> SolveResult:
    """L-shaped method on a two-stage tree.

    Raises :class:`SolveLimit` after ``max_iters`` master solves.
    """
    if tree.num_stages > 2:
        raise ValueError(f"L-shaped needs a two-stage tree, got {tree.num_stages} stages")
    if mode not in ("uni", "multi"):
        raise ValueError(f"mode must be 'uni' or 'multi', got {mode!r}")
    root = tree[tree.root]
    subs = [tree[c] for c in sorted(root.children)]
    probs = [s.prob for s in subs]
    pool = CutPool()
    trace = SolveTrace()
    state = MasterState()
    res = SolveResult("running", trace=trace, pools={root.node_id: pool})
    best = None

    def finish(status, reason, objective=None):
        res.status = status
        res.objective = objective
        res.iterations = state.iteration
        res.feasibility_cuts = pool.r
        res.optimality_cuts = pool.s
        res.lower, res.upper = state.lower, state.upper
        trace.terminate(reason)
        return res

    while state.iteration < max_iters:
        state.iteration += 1
        it = state.iteration
        lp, targets = node_lp(root, pool)
        sol = solve_lp(lp, tol)
        y = sol.primal[: root.num_vars] if sol.optimal else None
        trace.solve(root.node_id, 0, sol.status, sol.objective, y)
        if sol.status is Status.INFEASIBLE:
            return finish("infeasible", "master infeasible")
        if sol.status is Status.UNBOUNDED:
            return finish("unbounded", "master unbounded")
        state.y = y
        state.theta = dict(zip(targets, sol.primal[root.num_vars :]))
        if theta_complete(targets, root.children, mode):
            lo = sol.objective
            state.lower = lo if state.lower is None else max(state.lower, lo)
        if not subs:
            state.upper = sol.objective
            trace.bounds(state.lower, state.upper)
            res.decisions = {root.node_id: y}
            return finish("optimal", "single stage", sol.objective)
        trace.move("down", 0, 1)

        checks = pmap(lambda s: solve_feasibility_problem(s, y, tol=tol), subs, workers)
        infeasible = False
        for sub, chk in zip(subs, checks):
            trace.solve(sub.node_id, 1, "optimal" if chk.feasible else "infeasible", chk.violation, None, "feasibility")
            if chk.feasible:
                continue
            infeasible = True
            try:
                cut = make_feasibility_cut(chk.sigma, sub, iteration=it)
            except DegenerateCut:
                return finish("infeasible", f"node {sub.node_id} infeasible for every first-stage decision")
            if pool.add(cut):
                trace.cut("feas", sub.node_id, root.node_id, cut.D, cut.d)
        if infeasible:
            trace.move("up", 1, 0)
            trace.bounds(state.lower, state.upper)
            continue

        sols = pmap(lambda s: solve_lp(node_lp(s, CutPool(), y)[0], tol), subs, workers)
        for sub, s in zip(subs, sols):
            trace.solve(sub.node_id, 1, s.status, s.objective, s.primal)
        if any(s.status is Status.UNBOUNDED for s in sols):
            return finish("unbounded", "sub-problem unbounded")
        if any(not s.optimal for s in sols):
            raise RuntimeError("sub-problem infeasible although its feasibility check passed")
        value = float(root.q @ y) + sum(p * s.objective for p, s in zip(probs, sols))
        if best is None or value < best[0]:
            best = (value, y, [s.primal for s in sols])
        state.upper = best[0]
        fresh = make_optimality_cut([s.duals for s in sols], probs, subs, mode, iteration=it)
        trace.bounds(state.lower, state.upper)
        if termination_check(state, fresh, tol.gap):
            res.decisions = {root.node_id: y}
            res.decisions.update({sub.node_id: s.primal for sub, s in zip(subs, sols)})
            return finish("optimal", "optimality cuts satisfied", value)
        for cut in fresh:
            if not cut_satisfied(cut, state.theta, y, tol.gap) and pool.add(cut):
                source = cut.target if cut.target != AGGREGATE else sorted(root.children)
                trace.cut("opt", source, root.node_id, cut.G, cut.g, theta=str(cut.target))
        trace.move("up", 1, 0)

    finish("limit", f"iteration limit {max_iters}")
    raise SolveLimit(f"L-shaped stopped after {max_iters} iterations", res)
