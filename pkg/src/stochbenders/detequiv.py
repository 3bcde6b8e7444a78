"""Flatten scenario trees into a single LP, or collapse stage ranges into
super-nodes holding their deterministic-equivalent blocks."""
from __future__ import annotations

import numpy as np

from .lpcore import LinearProgram
from .scenario import NodeProblem, ScenarioTree, validate


class InvalidTree(ValueError):
    pass


class BadRange(ValueError):
    pass


def _subtree(tree: ScenarioTree, top: int, last_stage: int) -> list:
    """Ids of ``top`` and its descendants down to ``last_stage``, ordered by (stage, id)."""
    out = []
    stack = [top]
    while stack:
        i = stack.pop()
        out.append(i)
        if tree[i].stage < last_stage:
            stack.extend(tree[i].children)
    return sorted(out, key=lambda i: (tree[i].stage, i))


def _block(tree: ScenarioTree, top: int, last_stage: int):
    """Deterministic-equivalent block of the subtree under ``top``.

    Objective blocks are weighted by probabilities conditional on ``top``.
    Returns ``(ids, cols, q, W, h, relations, T_top_rows)``, where the last
    item is ``top``'s own T stacked over zero rows (or None at the root).
    """
    ids = _subtree(tree, top, last_stage)
    cols = {}
    n = 0
    for i in ids:
        cols[i] = (n, n + tree[i].num_vars)
        n += tree[i].num_vars
    cond = {top: 1.0}
    for i in ids[1:]:
        cond[i] = cond[tree[i].parent] * tree[i].prob
    m = sum(tree[i].num_rows for i in ids)
    q = np.zeros(n)
    W = np.zeros((m, n))
    h = np.zeros(m)
    rel = []
    node_top = tree[top]
    T = None if node_top.T is None else np.zeros((m, node_top.T.shape[1]))
    r = 0
    for i in ids:
        node = tree[i]
        a, b = cols[i]
        q[a:b] = cond[i] * node.q
        k = node.num_rows
        W[r : r + k, a:b] = node.W
        if i != top:
            pa, pb = cols[node.parent]
            W[r : r + k, pa:pb] = node.T
        elif T is not None and k:
            T[r : r + k] = node.T
        h[r : r + k] = node.h
        rel.extend(node.relations)
        r += k
    return ids, cols, q, W, h, tuple(rel), T


def build_deterministic_equivalent(tree: ScenarioTree):
    """Return ``(lp, var_map)`` where ``var_map[node_id] = (start, stop)``.

    Column blocks follow breadth-first ``(stage, node_id)`` order, each
    weighted by its node's path probability.
    """
    problems = validate(tree)
    if problems:
        raise InvalidTree("; ".join(f"{v.node_id}: {v.reason}" for v in problems))
    _, cols, q, W, h, rel, _ = _block(tree, tree.root, tree.num_stages - 1)
    return LinearProgram("min", q, W, rel, h), cols


def aggregate_stages(tree: ScenarioTree, first: int, last: int) -> ScenarioTree:
    """Collapse stages ``first..last`` into one stage of super-nodes.

    Each stage-``first`` node keeps its id and becomes a super-node holding
    the deterministic-equivalent block of its subtree down to ``last``.
    Stage ``last + 1`` descendants become its children; their T matrices are
    widened onto the super-node's columns and their probabilities are
    multiplied by their old parent's probability within the block so that
    siblings still sum to one.
    """
    S = tree.num_stages
    if not (0 <= first <= last < S):
        raise BadRange(f"invalid stage range [{first}, {last}] for a {S}-stage tree")
    shift = last - first
    nodes = {}
    for i in tree.order():
        n = tree[i]
        if n.stage < first:
            nodes[i] = n
    for top in tree.stage_nodes(first):
        ids, cols, q, W, h, rel, T = _block(tree, top, last)
        cond = {top: 1.0}
        for i in ids[1:]:
            cond[i] = cond[tree[i].parent] * tree[i].prob
        kids = []
        for i in ids:
            if tree[i].stage != last:
                continue
            a, b = cols[i]
            for c in tree[i].children:
                child = tree[c]
                Tc = np.zeros((child.num_rows, q.size))
                Tc[:, a:b] = child.T
                nodes[c] = _restage(child, child.stage - shift, top, cond[i] * child.prob, Tc)
                kids.append(c)
        old = tree[top]
        nodes[top] = NodeProblem(top, first, old.parent, old.prob, q, W, h, rel, T, tuple(kids), old.name)
    for i in tree.order():
        n = tree[i]
        if n.stage > last + 1:
            nodes[i] = _restage(n, n.stage - shift, n.parent, n.prob, n.T)
    return ScenarioTree(nodes, tree.root)


def _restage(n: NodeProblem, stage, parent, prob, T) -> NodeProblem:
    return NodeProblem(n.node_id, stage, parent, prob, n.q, n.W, n.h, n.relations, T, n.children, n.name)
