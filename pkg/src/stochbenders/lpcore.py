"""Dense linear programs, a two-phase tableau simplex and duality helpers.

Dual multipliers are reported as sensitivities of the optimal objective with
respect to each row's right-hand side.  For a maximization with ``le`` rows
they are non-negative, for a minimization with ``ge`` rows likewise, and in
every case ``objective == duals @ rhs`` at an optimum.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

RELATIONS = ("le", "ge", "eq")
VAR_KINDS = ("nonneg", "nonpos", "free")


class LPError(Exception):
    pass


class IterationLimit(LPError):
    """Raised when the simplex exceeds its pivot budget."""


class NotStandardized(LPError):
    pass


class TooLarge(LPError):
    pass


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Tolerances:
    feas: float = 1e-7
    gap: float = 1e-6
    pivot: float = 1e-9


DEFAULT_TOL = Tolerances()


@dataclass
class LinearProgram:
    """``sense  objective @ x  s.t.  A[i] @ x  (relations[i])  rhs[i]``."""

    sense: str
    objective: np.ndarray
    A: np.ndarray
    relations: tuple
    rhs: np.ndarray
    var_kinds: tuple = None
    var_names: Optional[tuple] = None
    row_names: Optional[tuple] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = self.objective.size
        if n < 1:
            raise ValueError("an LP needs at least one variable")
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.relations = tuple(self.relations)
        if self.var_kinds is None:
            self.var_kinds = ("nonneg",) * n
        self.var_kinds = tuple(self.var_kinds)
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        m = self.A.shape[0]
        if self.rhs.size != m or len(self.relations) != m:
            raise ValueError("A, relations and rhs disagree on the number of rows")
        if len(self.var_kinds) != n:
            raise ValueError("var_kinds must have one entry per variable")
        bad = set(self.relations) - set(RELATIONS)
        if bad:
            raise ValueError(f"unknown relations {sorted(bad)}")
        bad = set(self.var_kinds) - set(VAR_KINDS)
        if bad:
            raise ValueError(f"unknown variable kinds {sorted(bad)}")
        for arr in (self.objective, self.A, self.rhs):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def rows(self):
        """Iterate ``(coefficients, relation, rhs)`` triples."""
        return zip(self.A, self.relations, self.rhs)

    def row_activity(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def violation(self, x) -> float:
        """Largest row or sign violation of the point ``x``."""
        x = np.asarray(x, dtype=float)
        act = self.A @ x
        worst = 0.0
        for a, rel, b in zip(act, self.relations, self.rhs):
            if rel == "le":
                worst = max(worst, a - b)
            elif rel == "ge":
                worst = max(worst, b - a)
            else:
                worst = max(worst, abs(a - b))
        for xj, kind in zip(x, self.var_kinds):
            if kind == "nonneg":
                worst = max(worst, -xj)
            elif kind == "nonpos":
                worst = max(worst, xj)
        return worst

    def value(self, x) -> float:
        return float(self.objective @ np.asarray(x, dtype=float))

    def is_standardized(self) -> bool:
        return all(k == "nonneg" for k in self.var_kinds)

    def same_as(self, other: "LinearProgram", atol: float = 0.0) -> bool:
        return (
            self.sense == other.sense
            and self.relations == other.relations
            and self.var_kinds == other.var_kinds
            and self.A.shape == other.A.shape
            and np.allclose(self.objective, other.objective, rtol=0, atol=atol)
            and np.allclose(self.A, other.A, rtol=0, atol=atol)
            and np.allclose(self.rhs, other.rhs, rtol=0, atol=atol)
        )


@dataclass
class SimplexSolution:
    status: Status
    primal: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True)
class StandardizationMap:
    """How each original variable maps onto the standardized columns.

    Entries are ``("identity", j)``, ``("negated", j)`` or
    ``("split", j_pos, j_neg)``.  Rows are never flipped by
    :func:`standardize`; ``row_flips`` is kept so callers can record flips
    they apply themselves.
    """

    columns: tuple
    row_flips: tuple = field(default=())

    def recover(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.empty(len(self.columns))
        for i, entry in enumerate(self.columns):
            if entry[0] == "identity":
                out[i] = z[entry[1]]
            elif entry[0] == "negated":
                out[i] = -z[entry[1]]
            else:
                out[i] = z[entry[1]] - z[entry[2]]
        return out

    @property
    def is_identity(self) -> bool:
        return all(e == ("identity", i) for i, e in enumerate(self.columns)) and not any(
            self.row_flips
        )


def standardize(p: LinearProgram) -> tuple[LinearProgram, StandardizationMap]:
    """Rewrite ``p`` so every variable is non-negative.

    Non-positive variables are negated and free variables are split into a
    difference of two non-negative columns (the negative part is appended
    immediately after the positive part).
    """
    cols = []
    blocks = []
    obj = []
    names = []
    j = 0
    for i, kind in enumerate(p.var_kinds):
        a = p.A[:, i]
        name = p.var_names[i] if p.var_names else f"x{i}"
        if kind == "nonneg":
            cols.append(("identity", j))
            blocks.append(a)
            obj.append(p.objective[i])
            names.append(name)
            j += 1
        elif kind == "nonpos":
            cols.append(("negated", j))
            blocks.append(-a)
            obj.append(-p.objective[i])
            names.append(name + "_neg")
            j += 1
        else:
            cols.append(("split", j, j + 1))
            blocks.extend([a, -a])
            obj.extend([p.objective[i], -p.objective[i]])
            names.extend([name + "_p", name + "_m"])
            j += 2
    A = np.column_stack(blocks) if p.num_rows else np.zeros((0, j))
    lp = LinearProgram(
        p.sense,
        np.array(obj),
        A,
        p.relations,
        p.rhs.copy(),
        ("nonneg",) * j,
        tuple(names) if p.var_names else None,
        p.row_names,
    )
    return lp, StandardizationMap(tuple(cols), (False,) * p.num_rows)


def _run_simplex(T, rhs, basis, cost, allowed, tol, limit, counter):
    """Maximize ``cost`` over the tableau in place using Bland's rule.

    Returns False if an improving column has no blocking row (unbounded).
    """
    m = T.shape[0]
    while True:
        if counter[0] >= limit:
            raise IterationLimit(f"simplex exceeded {limit} pivots")
        reduced = cost - cost[basis] @ T if m else cost.copy()
        entering = -1
        for j in allowed:
            if reduced[j] > tol.pivot:
                entering = j
                break
        if entering < 0:
            return True
        col = T[:, entering]
        rows = np.nonzero(col > tol.pivot)[0]
        if rows.size == 0:
            return False
        ratios = rhs[rows] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol.pivot * max(1.0, abs(best))]
        leave = ties[np.argmin(basis[ties])]
        _pivot(T, rhs, leave, entering)
        basis[leave] = entering
        counter[0] += 1


def _pivot(T, rhs, r, c):
    piv = T[r, c]
    T[r] /= piv
    rhs[r] /= piv
    factors = T[:, c].copy()
    factors[r] = 0.0
    T -= np.outer(factors, T[r])
    rhs -= factors * rhs[r]
    T[np.abs(T) < 1e-13] = 0.0
    T[:, c] = 0.0
    T[r, c] = 1.0


def _solve_canonical(c, A, b, tol, max_iter):
    """max c@x s.t. A@x <= b, x >= 0.

    Returns ``(status, x, y, iterations)`` with ``y`` the non-negative row
    multipliers of the ``le`` rows.
    """
    m, n = A.shape
    neg = b < 0
    k = int(neg.sum())
    N = n + m + k
    T = np.zeros((m, N))
    T[:, :n] = A
    T[:, n : n + m] = np.eye(m)
    rhs = b.astype(float).copy()
    basis = np.arange(n, n + m)
    art_rows = np.nonzero(neg)[0]
    for idx, i in enumerate(art_rows):
        T[i] = -T[i]
        rhs[i] = -rhs[i]
        T[i, n + m + idx] = 1.0
        basis[i] = n + m + idx
    limit = max_iter if max_iter is not None else 200 * (m + N) + 1000
    counter = [0]
    real_cols = list(range(n + m))
    if k:
        cost1 = np.zeros(N)
        cost1[n + m :] = -1.0
        _run_simplex(T, rhs, basis, cost1, range(N), tol, limit, counter)
        infeas = rhs[basis >= n + m].sum()
        if infeas > tol.feas:
            return Status.INFEASIBLE, None, None, counter[0]
        for i in range(m):
            if basis[i] >= n + m:
                nz = [j for j in real_cols if abs(T[i, j]) > tol.pivot]
                if nz:
                    _pivot(T, rhs, i, nz[0])
                    basis[i] = nz[0]
                    counter[0] += 1
    cost2 = np.zeros(N)
    cost2[:n] = c
    bounded = _run_simplex(T, rhs, basis, cost2, real_cols, tol, limit, counter)
    if not bounded:
        return Status.UNBOUNDED, None, None, counter[0]
    x = np.zeros(N)
    x[basis] = rhs
    y = cost2[basis] @ T[:, n : n + m] if m else np.zeros(0)
    return Status.OPTIMAL, np.maximum(x[:n], 0.0), y, counter[0]


def solve_lp(p: LinearProgram, tol: Tolerances = DEFAULT_TOL, max_iter: int | None = None) -> SimplexSolution:
    """Solve ``p`` with a two-phase dense tableau simplex (Bland's rule)."""
    sp, smap = standardize(p)
    sense = 1.0 if p.sense == "max" else -1.0
    c = sense * sp.objective
    rows, rhs, owner, sign = [], [], [], []
    for i, (a, rel, b) in enumerate(sp.rows()):
        if rel in ("le", "eq"):
            rows.append(a)
            rhs.append(b)
            owner.append(i)
            sign.append(1.0)
        if rel in ("ge", "eq"):
            rows.append(-a)
            rhs.append(-b)
            owner.append(i)
            sign.append(-1.0)
    A = np.array(rows).reshape(-1, sp.num_vars)
    status, z, y, iters = _solve_canonical(c, A, np.array(rhs, dtype=float), tol, max_iter)
    if status is not Status.OPTIMAL:
        return SimplexSolution(status, iterations=iters)
    duals = np.zeros(p.num_rows)
    np.add.at(duals, np.array(owner, dtype=int), sense * np.array(sign) * y)
    x = smap.recover(z)
    return SimplexSolution(Status.OPTIMAL, x, duals, p.value(x), iters)


_DUAL_VAR_KIND = {
    ("max", "le"): "nonneg",
    ("max", "ge"): "nonpos",
    ("min", "ge"): "nonneg",
    ("min", "le"): "nonpos",
}


def dual_of(p: LinearProgram) -> LinearProgram:
    """Form the LP dual of a standardized program.

    Dual variable signs follow the same convention as :func:`solve_lp`'s
    reported duals, so the optimal dual point equals the primal's duals.
    """
    if not p.is_standardized():
        raise NotStandardized("dual_of needs all variables non-negative; call standardize first")
    if p.num_rows == 0:
        raise ValueError("cannot dualize an LP without rows")
    kinds = tuple(_DUAL_VAR_KIND.get((p.sense, rel), "free") for rel in p.relations)
    if p.sense == "max":
        return LinearProgram("min", p.rhs.copy(), p.A.T.copy(), ("ge",) * p.num_vars, p.objective.copy(), kinds)
    return LinearProgram("max", p.rhs.copy(), p.A.T.copy(), ("le",) * p.num_vars, p.objective.copy(), kinds)


def enumerate_cornerpoints(p: LinearProgram, max_dims: int = 4, tol: Tolerances = DEFAULT_TOL) -> list:
    """Brute-force every basic feasible point of a small standardized LP.

    Returns a list of ``(point, objective)`` pairs without duplicates.
    """
    if not p.is_standardized():
        raise NotStandardized("enumerate_cornerpoints needs a standardized LP")
    n = p.num_vars
    if n > max_dims:
        raise TooLarge(f"{n} variables exceeds max_dims={max_dims}")
    planes = [(a, b) for a, b in zip(p.A, p.rhs)]
    planes += [(np.eye(n)[j], 0.0) for j in range(n)]
    seen = []
    out = []
    for combo in itertools.combinations(range(len(planes)), n):
        M = np.array([planes[i][0] for i in combo])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, np.array([planes[i][1] for i in combo]))
        if p.violation(x) > tol.feas:
            continue
        if any(np.allclose(x, s, atol=1e-9) for s in seen):
            continue
        x = np.where(np.abs(x) < 1e-12, 0.0, x)
        seen.append(x)
        out.append((x, p.value(x)))
    return out


def best_cornerpoint(p: LinearProgram, max_dims: int = 4) -> Optional[float]:
    pts = enumerate_cornerpoints(p, max_dims)
    if not pts:
        return None
    vals = [v for _, v in pts]
    return max(vals) if p.sense == "max" else min(vals)


def lp_from_rows(sense: str, objective: Sequence[float], rows: Sequence, var_kinds=None) -> LinearProgram:
    """Build an LP from ``(coefficients, relation, rhs)`` triples."""
    n = len(objective)
    A = np.array([r[0] for r in rows], dtype=float).reshape(-1, n)
    return LinearProgram(sense, objective, A, tuple(r[1] for r in rows), [r[2] for r in rows], var_kinds)
