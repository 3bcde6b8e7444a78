"""Nested Benders decomposition over a multi-stage scenario tree.

Decisions travel down the tree, feasibility and optimality cuts travel up.
Each node keeps its own cut pool and is re-solved only when it has never been
solved, received a different parent decision, or gained a cut.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lpcore import DEFAULT_TOL, Status, Tolerances, solve_lp
from .lshaped import (
    AGGREGATE,
    CutPool,
    DegenerateCut,
    cut_satisfied,
    make_feasibility_cut,
    make_optimality_cut,
    node_lp,
    solve_feasibility_problem,
    theta_complete,
)
from .result import SolveLimit, SolveResult, pmap
from .scenario import ScenarioTree, validate
from .trace import SolveTrace


class Protocol(str, enum.Enum):
    FAST_FORWARD = "ff"
    FAST_BACK = "fb"
    FAST_FORWARD_FAST_BACK = "fffb"


class NodeStatus(str, enum.Enum):
    UNSOLVED = "unsolved"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


@dataclass
class NodeState:
    node_id: int
    pool: CutPool = field(default_factory=CutPool)
    parent_decision: Optional[np.ndarray] = None
    solved_with: Optional[np.ndarray] = None
    decision: Optional[np.ndarray] = None
    theta: dict = field(default_factory=dict)
    objective: Optional[float] = None
    dirty: bool = True
    new_cuts: bool = False
    status: NodeStatus = NodeStatus.UNSOLVED
    duals: Optional[np.ndarray] = None
    cut_const: float = 0.0
    feas_cut: object = None
    degenerate: bool = False


@dataclass
class _Solved:
    status: Status
    decision: Optional[np.ndarray] = None
    theta: dict = field(default_factory=dict)
    objective: Optional[float] = None
    duals: Optional[np.ndarray] = None
    cut_const: float = 0.0
    feas_cut: object = None
    degenerate: bool = False


def _solve_node(node, pool: CutPool, y, tol: Tolerances) -> _Solved:
    lp, targets = node_lp(node, pool, y)
    sol = solve_lp(lp, tol)
    n = node.num_vars
    if sol.optimal:
        m = node.num_rows
        extra_rhs = lp.rhs[m:]
        return _Solved(
            Status.OPTIMAL,
            sol.primal[:n],
            dict(zip(targets, sol.primal[n:])),
            sol.objective,
            sol.duals,
            float(sol.duals[m:] @ extra_rhs),
        )
    if sol.status is Status.UNBOUNDED:
        return _Solved(Status.UNBOUNDED)
    if node.T is None:
        return _Solved(Status.INFEASIBLE)
    extra = None
    if pool.feasibility:
        extra = (np.array([c.D for c in pool.feasibility]), np.array([c.d for c in pool.feasibility]))
    chk = solve_feasibility_problem(node, y, extra, tol)
    if chk.feasible:
        raise RuntimeError(f"node {node.node_id}: LP infeasible but total slack is {chk.violation:g}")
    try:
        cut = make_feasibility_cut(chk.sigma, node, None if extra is None else extra[1], node.node_id)
    except DegenerateCut:
        return _Solved(Status.INFEASIBLE, degenerate=True)
    return _Solved(Status.INFEASIBLE, feas_cut=cut)


def legal_moves(t: int, num_stages: int, any_feasible: bool) -> set:
    """Moves allowed from stage ``t``: never above the root, never below the
    leaves, and never down from a stage where every problem is infeasible."""
    moves = set()
    if t > 0:
        moves.add("ascend")
    if t < num_stages - 1 and any_feasible:
        moves.add("descend")
    return moves


@dataclass
class TerminationResult:
    optimal: bool
    failing: list


def global_termination(tree: ScenarioTree, states: dict, mode: str = "uni", tol: float = DEFAULT_TOL.gap) -> TerminationResult:
    """Check ``theta_X >= Q(y_X)`` at every node with children.

    ``Q(y_X)`` is the probability-weighted sum of the children's latest
    objectives; a node fails when a child is unsolved, stale or infeasible.
    """
    failing = []
    for nid in tree.order():
        node = tree[nid]
        st = states[nid]
        if st.status is not NodeStatus.FEASIBLE or st.dirty:
            if not _reachable(tree, states, nid):
                continue
            failing.append(nid)
            continue
        if not node.children:
            continue
        kids = [states[c] for c in sorted(node.children)]
        if any(k.status is not NodeStatus.FEASIBLE or k.dirty for k in kids):
            failing.append(nid)
            continue
        probs = [tree[c].prob for c in sorted(node.children)]
        if mode == "multi":
            ok = all(
                c in st.theta and st.theta[c] >= p * k.objective - tol
                for c, p, k in zip(sorted(node.children), probs, kids)
            )
        else:
            Q = sum(p * k.objective for p, k in zip(probs, kids))
            ok = AGGREGATE in st.theta and st.theta[AGGREGATE] >= Q - tol
        if not ok:
            failing.append(nid)
    return TerminationResult(not failing, failing)


def _reachable(tree, states, nid) -> bool:
    n = tree[nid]
    while n.parent is not None:
        if states[n.parent].status is not NodeStatus.FEASIBLE:
            return False
        n = tree[n.parent]
    return True


def run_nested(
    tree: ScenarioTree,
    protocol: Protocol | str = Protocol.FAST_FORWARD_FAST_BACK,
    mode: str = "uni",
    tol: Tolerances = DEFAULT_TOL,
    max_passes: int = 5000,
    workers: Optional[int] = None,
) -> SolveResult:
    """Nested Benders with the given sequencing protocol.

    Raises :class:`SolveLimit` once ``max_passes`` stage sweeps have run.
    """
    problems = validate(tree)
    if problems:
        raise ValueError("; ".join(f"{v.node_id}: {v.reason}" for v in problems))
    protocol = Protocol(protocol)
    if mode not in ("uni", "multi"):
        raise ValueError(f"mode must be 'uni' or 'multi', got {mode!r}")
    S = tree.num_stages
    states = {i: NodeState(i) for i in tree.order()}
    trace = SolveTrace()
    res = SolveResult("running", trace=trace, pools={i: s.pool for i, s in states.items()})
    root_id = tree.root
    lower = upper = None
    t = 0
    descending = True
    passes = 0

    def active(i) -> bool:
        return i == root_id or _reachable(tree, states, i)

    def finish(status, reason, objective=None):
        res.status = status
        res.objective = objective
        res.iterations = passes
        res.feasibility_cuts = sum(s.pool.r for s in states.values())
        res.optimality_cuts = sum(s.pool.s for s in states.values())
        res.lower, res.upper = lower, upper
        trace.terminate(reason)
        return res

    while passes < max_passes:
        passes += 1
        todo = [i for i in tree.stage_nodes(t) if states[i].dirty and active(i)]
        snapshots = [(tree[i], states[i].pool.copy(), states[i].parent_decision) for i in todo]
        results = pmap(lambda a: _solve_node(a[0], a[1], a[2], tol), snapshots, workers)

        for i, r in zip(todo, results):
            st = states[i]
            node = tree[i]
            st.dirty = st.new_cuts = False
            st.solved_with = st.parent_decision
            trace.solve(i, t, r.status, r.objective, r.decision)
            if r.status is Status.UNBOUNDED:
                return finish("unbounded", f"node {i} unbounded")
            if r.status is Status.INFEASIBLE:
                st.status = NodeStatus.INFEASIBLE
                st.decision = None
                st.feas_cut = r.feas_cut
                st.degenerate = r.degenerate
                if i == root_id:
                    return finish("infeasible", "root problem infeasible")
                if r.degenerate:
                    return finish("infeasible", f"node {i} infeasible for every parent decision")
                continue
            st.status = NodeStatus.FEASIBLE
            st.decision = r.decision
            st.theta = r.theta
            st.objective = r.objective
            st.duals = r.duals
            st.cut_const = r.cut_const
            for c in sorted(node.children):
                cs = states[c]
                cs.parent_decision = r.decision
                cs.dirty = (
                    cs.status is NodeStatus.UNSOLVED
                    or cs.new_cuts
                    or not np.array_equal(cs.solved_with, r.decision)
                )

        if t == 0 and todo:
            rs = states[root_id]
            if theta_complete(list(rs.theta), tree[root_id].children, mode):
                lower = rs.objective if lower is None else max(lower, rs.objective)
            trace.bounds(lower, upper)

        cut_added = feas_added = False
        if t > 0 and todo:
            parents = sorted({tree[i].parent for i in todo})
            for pid in parents:
                kind = _cuts_into_parent(tree, states, pid, set(todo), mode, tol, trace, passes)
                cut_added |= kind is not None
                feas_added |= kind == "feas"

        cost = _policy_cost(tree, states)
        if cost is not None and (upper is None or cost < upper):
            upper = cost
            trace.bounds(lower, upper)

        if t == 0 and not states[root_id].dirty:
            term = global_termination(tree, states, mode, tol.gap)
            if term.optimal:
                res.decisions = {i: states[i].decision for i in tree.order()}
                return finish("optimal", "theta >= Q(y) at every node", states[root_id].objective)

        any_feasible = any(states[i].status is NodeStatus.FEASIBLE for i in tree.stage_nodes(t) if active(i))
        moves = legal_moves(t, S, any_feasible)
        below = any(states[i].dirty and active(i) for i in tree.order() if tree[i].stage > t)
        if feas_added:
            step = "ascend"
        else:
            step = _choose(protocol, moves, below, cut_added, descending)
        if protocol is Protocol.FAST_FORWARD_FAST_BACK and not feas_added:
            descending = step == "descend"
        new_t = t + 1 if step == "descend" else t - 1
        trace.move("down" if step == "descend" else "up", t, new_t)
        t = new_t

    finish("limit", f"pass limit {max_passes}")
    raise SolveLimit(f"nested Benders stopped after {max_passes} passes", res)


def _choose(protocol, moves, below, cut_added, descending):
    down = "descend" in moves
    up = "ascend" in moves
    if protocol is Protocol.FAST_FORWARD:
        if down and below:
            return "descend"
        return "ascend" if up else "descend"
    if protocol is Protocol.FAST_BACK:
        if up and cut_added:
            return "ascend"
        if down and below:
            return "descend"
        return "ascend" if up else "descend"
    if descending:
        if down and below:
            return "descend"
        return "ascend" if up else "descend"
    return "ascend" if up else "descend"


def _cuts_into_parent(tree, states, pid, solved, mode, tol, trace, it) -> Optional[str]:
    """Fold the cuts from ``pid``'s freshly solved children into its pool.

    Returns "feas" or "opt" for the kind of cut added, or None.
    """
    parent = tree[pid]
    ps = states[pid]
    kids = sorted(parent.children)
    fresh_kids = [c for c in kids if c in solved]
    if not fresh_kids:
        return None
    added = None
    bad = [c for c in fresh_kids if states[c].status is NodeStatus.INFEASIBLE]
    if any(states[c].status is NodeStatus.INFEASIBLE for c in kids):
        for c in bad:
            cut = states[c].feas_cut
            if cut is not None and ps.pool.add(cut):
                cut.iteration = it
                trace.cut("feas", c, pid, cut.D, cut.d)
                ps.dirty = ps.new_cuts = True
                added = "feas"
        return added
    # a child without a full cost-to-go estimate may overstate the parent's future cost
    if any(not theta_complete(list(states[c].theta), tree[c].children, mode) for c in kids):
        return added
    subs = [tree[c] for c in kids]
    fresh = make_optimality_cut(
        [states[c].duals for c in kids],
        [s.prob for s in subs],
        subs,
        mode,
        [states[c].cut_const for c in kids],
        it,
    )
    for cut in fresh:
        if cut_satisfied(cut, ps.theta, ps.decision, tol.gap):
            continue
        if ps.pool.add(cut):
            source = cut.target if cut.target != AGGREGATE else kids
            trace.cut("opt", source, pid, cut.G, cut.g, theta=str(cut.target))
            ps.dirty = ps.new_cuts = True
            added = "opt"
    return added


def _policy_cost(tree, states) -> Optional[float]:
    """Expected cost of the current decisions when every node is solved,
    feasible and consistent with its parent's decision."""
    total = 0.0
    for i in tree.order():
        st = states[i]
        if st.status is not NodeStatus.FEASIBLE or st.dirty:
            return None
        total += tree.path_prob(i) * float(tree[i].q @ st.decision)
    return total
