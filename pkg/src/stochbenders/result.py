from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .trace import SolveTrace


@dataclass
class SolveResult:
    status: str
    objective: Optional[float] = None
    decisions: dict = field(default_factory=dict)
    iterations: int = 0
    feasibility_cuts: int = 0
    optimality_cuts: int = 0
    lower: Optional[float] = None
    upper: Optional[float] = None
    trace: SolveTrace = field(default_factory=SolveTrace)
    pools: dict = field(default_factory=dict)

    def report(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "decisions": {str(k): [float(a) for a in v] for k, v in self.decisions.items() if v is not None},
            "iterations": self.iterations,
            "cuts": {"feasibility": self.feasibility_cuts, "optimality": self.optimality_cuts},
            "bounds": {"lower": self.lower, "upper": self.upper},
        }


class SolveLimit(RuntimeError):
    """Iteration or pass budget exhausted; ``result`` holds bounds and trace."""

    def __init__(self, message, result: SolveResult):
        super().__init__(message)
        self.result = result


def pmap(fn, items, workers: Optional[int]):
    """Ordered map, run on a thread pool when ``workers > 1``."""
    items = list(items)
    if not workers or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
