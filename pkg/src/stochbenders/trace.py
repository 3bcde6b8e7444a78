"""Ordered solve-event log shared by the decomposition solvers."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


def _num(x):
    if x is None:
        return None
    x = float(x)
    return None if not math.isfinite(x) else x


def _vec(v):
    return None if v is None else [float(a) for a in v]


@dataclass
class SolveTrace:
    events: list = field(default_factory=list)

    def solve(self, node, stage, status, objective=None, decision=None, kind="lp"):
        self.events.append(
            {
                "event": "SOLVE",
                "node": node,
                "stage": stage,
                "status": str(getattr(status, "value", status)),
                "objective": _num(objective),
                "decision": _vec(decision),
                "kind": kind,
            }
        )

    def cut(self, kind, source, target, coefficients, rhs, theta=None):
        ev = {
            "event": "CUT",
            "kind": kind,
            "from": source,
            "to": target,
            "coefficients": _vec(coefficients),
            "rhs": float(rhs),
        }
        if theta is not None:
            ev["theta"] = theta
        self.events.append(ev)

    def move(self, direction, from_stage, to_stage):
        self.events.append({"event": "MOVE", "direction": direction, "from": from_stage, "to": to_stage})

    def bounds(self, lower, upper):
        self.events.append({"event": "BOUNDS", "lower": _num(lower), "upper": _num(upper)})

    def terminate(self, reason):
        self.events.append({"event": "TERMINATE", "reason": reason})

    def of(self, kind) -> list:
        return [e for e in self.events if e["event"] == kind]

    def cuts(self) -> list:
        return self.of("CUT")

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e) + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "SolveTrace":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])


def trace_problems(trace: SolveTrace, tol: float = 1e-9) -> list:
    """Check the structural trace invariants; returns a list of complaints."""
    out = []
    ev = trace.events
    if not ev or ev[-1]["event"] != "TERMINATE":
        out.append("last event is not TERMINATE")
    if sum(e["event"] == "TERMINATE" for e in ev) > 1:
        out.append("more than one TERMINATE")
    solved = set()
    lower = upper = None
    for k, e in enumerate(ev):
        if e["event"] == "SOLVE":
            solved.add(e["node"])
        elif e["event"] == "CUT":
            sources = e["from"] if isinstance(e["from"], list) else [e["from"]]
            if any(s not in solved for s in sources):
                out.append(f"event {k}: cut from {e['from']} before any solve of it")
        elif e["event"] == "BOUNDS":
            lo, up = e["lower"], e["upper"]
            if lo is not None and lower is not None and lo < lower - tol * max(1.0, abs(lower)):
                out.append(f"event {k}: lower bound fell {lower} -> {lo}")
            if up is not None and upper is not None and up > upper + tol * max(1.0, abs(upper)):
                out.append(f"event {k}: upper bound rose {upper} -> {up}")
            lower = lo if lo is not None else lower
            upper = up if up is not None else upper
    return out


def resolve_violations(trace: SolveTrace, parents: dict) -> list:
    """Solves of a node that repeat its previous solve with the same parent
    decision and no cut received in between."""
    out = []
    last_decision = {}
    seen = {}
    for k, e in enumerate(trace.events):
        if e["event"] == "CUT":
            seen.pop(e["to"], None)
        elif e["event"] == "SOLVE":
            n = e["node"]
            p = parents.get(n)
            given = last_decision.get(p) if p is not None else None
            if n in seen and seen[n] == given:
                out.append(f"event {k}: node {n} re-solved without new cut or parent decision")
            seen[n] = given
            last_decision[n] = e["decision"]
    return out
