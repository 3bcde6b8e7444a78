"""Scenario trees: node data, validation, JSON I/O, discretization and
random instance generation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from .lpcore import RELATIONS


class BadParam(ValueError):
    pass


class BadSpec(ValueError):
    pass


def _frozen(a):
    arr = np.array(a, dtype=float).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(eq=False)
class NodeProblem:
    """One decision point: ``min q@x  s.t.  W@x + T@x_parent (rel) h, x >= 0``."""

    node_id: int
    stage: int
    parent: Optional[int]
    prob: float
    q: np.ndarray
    W: np.ndarray
    h: np.ndarray
    relations: tuple
    T: Optional[np.ndarray] = None
    children: tuple = ()
    name: Optional[str] = None

    def __post_init__(self):
        self.q = _frozen(self.q)
        self.h = _frozen(self.h)
        W = np.array(self.W, dtype=float).reshape(self.h.size, self.q.size)
        W.flags.writeable = False
        self.W = W
        if self.T is not None:
            T = np.array(self.T, dtype=float)
            if T.ndim != 2:
                T = T.reshape(self.h.size, -1) if self.h.size else np.zeros((0, 0))
            T.flags.writeable = False
            self.T = T
        self.relations = tuple(self.relations)
        self.children = tuple(self.children)
        self.prob = float(self.prob)

    @property
    def num_vars(self) -> int:
        return self.q.size

    @property
    def num_rows(self) -> int:
        return self.h.size

    @property
    def label(self) -> str:
        return self.name if self.name is not None else str(self.node_id)

    def rhs_at(self, parent_decision) -> np.ndarray:
        """Right-hand side ``h - T @ parent_decision``."""
        if self.T is None or parent_decision is None:
            return np.array(self.h)
        return self.h - self.T @ np.asarray(parent_decision, dtype=float)

    def same_as(self, other: "NodeProblem") -> bool:
        def eq(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.node_id == other.node_id
            and self.stage == other.stage
            and self.parent == other.parent
            and self.prob == other.prob
            and self.relations == other.relations
            and self.children == other.children
            and eq(self.q, other.q)
            and eq(self.W, other.W)
            and eq(self.h, other.h)
            and eq(self.T, other.T)
        )


@dataclass(eq=False)
class ScenarioTree:
    nodes: dict
    root: int
    _order: list = field(default=None, repr=False)

    def __post_init__(self):
        self.nodes = dict(self.nodes)

    @property
    def num_stages(self) -> int:
        return 1 + max(n.stage for n in self.nodes.values())

    def __getitem__(self, node_id) -> NodeProblem:
        return self.nodes[node_id]

    def __len__(self):
        return len(self.nodes)

    def order(self) -> list:
        """Node ids sorted breadth-first by ``(stage, node_id)``."""
        if self._order is None:
            self._order = sorted(self.nodes, key=lambda i: (self.nodes[i].stage, i))
        return self._order

    def stage_nodes(self, t: int) -> list:
        return [i for i in self.order() if self.nodes[i].stage == t]

    def path_prob(self, node_id) -> float:
        p = 1.0
        n = self.nodes[node_id]
        while n.parent is not None:
            p *= n.prob
            n = self.nodes[n.parent]
        return p

    def leaves(self) -> list:
        return [i for i in self.order() if not self.nodes[i].children]

    def same_as(self, other: "ScenarioTree") -> bool:
        return (
            self.root == other.root
            and set(self.nodes) == set(other.nodes)
            and all(self.nodes[i].same_as(other.nodes[i]) for i in self.nodes)
        )

    # -- JSON ---------------------------------------------------------------
    def to_dict(self) -> dict:
        out = []
        for i in self.order():
            n = self.nodes[i]
            out.append(
                {
                    "id": n.node_id,
                    "stage": n.stage,
                    "parent": n.parent,
                    "prob": n.prob,
                    "q": n.q.tolist(),
                    "W": n.W.tolist(),
                    "T": None if n.T is None else n.T.tolist(),
                    "h": n.h.tolist(),
                    "relations": list(n.relations),
                    "children": list(n.children),
                }
            )
            if n.name is not None:
                out[-1]["name"] = n.name
        return {"nodes": out, "root": self.root}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioTree":
        try:
            nodes = {}
            for d in data["nodes"]:
                q = d["q"]
                W = d["W"] if d["W"] else np.zeros((len(d["h"]), len(q)))
                nodes[int(d["id"])] = NodeProblem(
                    int(d["id"]),
                    int(d["stage"]),
                    None if d["parent"] is None else int(d["parent"]),
                    float(d["prob"]),
                    q,
                    W,
                    d["h"],
                    d["relations"],
                    d.get("T"),
                    tuple(int(c) for c in d.get("children", [])),
                    d.get("name"),
                )
            root = int(data["root"])
        except (KeyError, TypeError, ValueError) as e:
            raise BadSpec(f"malformed tree: {e!r}") from e
        if root not in nodes:
            raise BadSpec(f"root {root} is not among the nodes")
        return cls(nodes, root)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioTree":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Violation:
    node_id: object
    reason: str


def validate(tree: ScenarioTree) -> list:
    """Return every structural problem in ``tree``; an empty list means ok."""
    out = []
    nodes = tree.nodes
    if tree.root not in nodes:
        return [Violation(tree.root, "root id is not a node")]
    root = nodes[tree.root]
    if root.parent is not None:
        out.append(Violation(root.node_id, "root has a parent"))
    if root.T is not None:
        out.append(Violation(root.node_id, "root has a T matrix"))
    if abs(root.prob - 1.0) > 1e-9:
        out.append(Violation(root.node_id, f"root probability {root.prob:g} is not 1"))
    if root.stage != 0:
        out.append(Violation(root.node_id, f"root stage {root.stage} is not 0"))
    for n in nodes.values():
        if n.W.shape != (n.num_rows, n.num_vars):
            out.append(Violation(n.node_id, f"W has shape {n.W.shape}, expected {(n.num_rows, n.num_vars)}"))
        if len(n.relations) != n.num_rows:
            out.append(Violation(n.node_id, f"{len(n.relations)} relations for {n.num_rows} rows"))
        if any(r not in RELATIONS for r in n.relations):
            out.append(Violation(n.node_id, "unknown relation"))
        if n.num_vars < 1:
            out.append(Violation(n.node_id, "node has no decision variables"))
        if not (0.0 < n.prob <= 1.0 + 1e-12):
            out.append(Violation(n.node_id, f"probability {n.prob:g} outside (0, 1]"))
        for arr in (n.q, n.W, n.h, n.T):
            if arr is not None and not np.all(np.isfinite(arr)):
                out.append(Violation(n.node_id, "non-finite data"))
                break
        for c in n.children:
            if c not in nodes:
                out.append(Violation(n.node_id, f"child {c} does not exist"))
            elif nodes[c].parent != n.node_id:
                out.append(Violation(c, f"listed as child of {n.node_id} but parent is {nodes[c].parent}"))
        if n.node_id == tree.root:
            continue
        if n.parent not in nodes:
            out.append(Violation(n.node_id, f"parent {n.parent} does not exist"))
            continue
        par = nodes[n.parent]
        if n.node_id not in par.children:
            out.append(Violation(n.node_id, f"parent {par.node_id} does not list it as a child"))
        if n.stage != par.stage + 1:
            out.append(Violation(n.node_id, f"stage {n.stage} does not follow parent stage {par.stage}"))
        if n.T is None:
            out.append(Violation(n.node_id, "non-root node has no T matrix"))
        elif n.num_rows and n.T.shape != (n.num_rows, par.num_vars):
            out.append(
                Violation(
                    n.node_id,
                    f"T of node {n.node_id} has {n.T.shape[1]} columns but parent {par.node_id} "
                    f"has {par.num_vars} variables",
                )
            )
    for n in nodes.values():
        if n.children:
            s = sum(nodes[c].prob for c in n.children if c in nodes)
            if abs(s - 1.0) > 1e-9:
                out.append(Violation(n.node_id, f"children probabilities sum {s:g}"))
    # reachability and balanced depth
    seen = set()
    stack = [tree.root]
    while stack:
        i = stack.pop()
        if i in seen:
            out.append(Violation(i, "node reached twice (cycle)"))
            continue
        seen.add(i)
        stack.extend(c for c in nodes[i].children if c in nodes)
    for i in nodes:
        if i not in seen:
            out.append(Violation(i, "node unreachable from root"))
    depth = {nodes[i].stage for i in seen if not nodes[i].children}
    if len(depth) > 1:
        out.append(Violation(tree.root, f"leaves at different stages {sorted(depth)}"))
    return out


def discretize_normal(mean: float, std: float, n: int, method: str = "stratified", seed: int | None = None) -> list:
    """Approximate ``N(mean, std**2)`` by ``n`` equally weighted values.

    ``stratified`` takes the quantile midpoints ``(k - 0.5) / n``;
    ``monte_carlo`` draws ``n`` seeded samples.
    """
    if not std > 0:
        raise BadParam(f"std must be positive, got {std}")
    if n < 1:
        raise BadParam(f"need at least one scenario, got n={n}")
    if method == "stratified":
        dist = NormalDist(mean, std)
        values = [mean] if n == 1 else [dist.inv_cdf((k - 0.5) / n) for k in range(1, n + 1)]
    elif method == "monte_carlo":
        values = np.random.default_rng(seed).normal(mean, std, n).tolist()
    else:
        raise BadParam(f"unknown method {method!r}")
    probs = [1.0 / n] * n
    probs[-1] = 1.0 - sum(probs[:-1])
    return list(zip(values, probs))


@dataclass
class TreeSpec:
    stages: int
    branching: Sequence[int] | int
    vars: int
    rows: int
    seed: int = 0
    infeasibility_fraction: float = 0.0
    band: float = 0.1


def generate_random_tree(spec: TreeSpec) -> ScenarioTree:
    """Random feasible, bounded tree.

    Every node gets a witness decision ``xhat``; its ``ge`` rows are built so
    the witness path satisfies them with non-negative slack, costs are
    non-negative, and a budget row ``sum(x) <= U`` keeps each node's
    decisions bounded.  A fraction of non-root nodes also receive a pair of
    rows confining one parent variable to a band around its witness value.
    """
    if spec.stages < 1:
        raise BadSpec("stages must be >= 1")
    if spec.vars < 1:
        raise BadSpec("vars must be >= 1")
    if spec.rows < 0:
        raise BadSpec("rows must be >= 0")
    br = spec.branching
    if isinstance(br, int):
        br = [br] * (spec.stages - 1)
    br = list(br)
    if len(br) < spec.stages - 1:
        raise BadSpec(f"need {spec.stages - 1} branching factors, got {len(br)}")
    if any(b < 1 for b in br[: spec.stages - 1]):
        raise BadSpec("branching factors must be >= 1")
    if not 0.0 <= spec.infeasibility_fraction <= 1.0:
        raise BadSpec("infeasibility_fraction must lie in [0, 1]")

    rng = np.random.default_rng(spec.seed)
    nv, nr = spec.vars, spec.rows
    witness = {}
    raw = {}
    next_id = 0
    frontier = [(None, 0)]
    while frontier:
        new = []
        for parent, stage in frontier:
            nid = next_id
            next_id += 1
            xhat = rng.uniform(0.5, 1.5, nv)
            witness[nid] = xhat
            q = rng.uniform(0.0, 1.0, nv)
            W = rng.uniform(-1.0, 1.0, (nr, nv))
            slack = rng.uniform(0.0, 0.5, nr)
            T = None
            h = W @ xhat - slack
            rel = ["ge"] * nr
            if parent is not None:
                T = rng.uniform(-1.0, 1.0, (nr, nv))
                h = h + T @ witness[parent]
            budget = float(xhat.sum() + rng.uniform(0.5, 1.5))
            W = np.vstack([W, np.ones(nv)])
            h = np.append(h, budget)
            rel.append("le")
            if T is not None:
                T = np.vstack([T, np.zeros(nv)])
                if rng.uniform() < spec.infeasibility_fraction:
                    W, T, h, rel = _add_band_rows(rng, W, T, h, rel, xhat, witness[parent], spec.band)
            prob = None
            raw[nid] = dict(stage=stage, parent=parent, q=q, W=W, T=T, h=h, rel=rel, children=[], prob=prob)
            if parent is not None:
                raw[parent]["children"].append(nid)
            if stage + 1 < spec.stages:
                new.extend((nid, stage + 1) for _ in range(br[stage]))
        frontier = new
    for nid, d in raw.items():
        kids = d["children"]
        if kids:
            w = rng.uniform(0.2, 1.0, len(kids))
            w = w / w.sum()
            w[-1] = 1.0 - w[:-1].sum()
            for c, p in zip(kids, w):
                raw[c]["prob"] = float(p)
    nodes = {
        nid: NodeProblem(
            nid,
            d["stage"],
            d["parent"],
            1.0 if d["parent"] is None else d["prob"],
            d["q"],
            d["W"],
            d["h"],
            d["rel"],
            d["T"],
            d["children"],
        )
        for nid, d in raw.items()
    }
    return ScenarioTree(nodes, 0)


def _add_band_rows(rng, W, T, h, rel, xhat, parent_xhat, band):
    # own x_k >= xhat_k, x_k +/- y_j <= xhat_k +/- yhat_j + band  =>  |y_j - yhat_j| <= band
    k = int(rng.integers(W.shape[1]))
    j = int(rng.integers(T.shape[1]))
    nv, pv = W.shape[1], T.shape[1]
    ek, ej = np.eye(nv)[k], np.eye(pv)[j]
    W = np.vstack([W, ek, ek, ek])
    T = np.vstack([T, np.zeros(pv), ej, -ej])
    h = np.concatenate([h, [xhat[k], xhat[k] + parent_xhat[j] + band, xhat[k] - parent_xhat[j] + band]])
    return W, T, h, rel + ["ge", "le", "le"]
