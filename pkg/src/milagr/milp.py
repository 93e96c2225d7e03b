"""Branch-and-bound mixed-integer linear programming.

The native engine is a best-bound search with most-fractional branching over
the dense simplex of :mod:`milagr.linprog`.  Instances beyond hand-rolled desk
scale are delegated to HiGHS through :func:`scipy.optimize.milp` behind the
same contract; every returned solution is re-verified post hoc (integrality
within 1e-6, rows within 1e-8) regardless of the backend.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint
from scipy.optimize import milp as _scipy_milp

from .errors import (
    DimensionMismatch,
    NodeLimitExceeded,
    NumericalBreakdown,
    UnboundedRelaxation,
)
from .linprog import INFEASIBLE, OPTIMAL, UNBOUNDED, LpOutcome, LpProblem, solve_lp

OPTIMAL_MILP = "optimal"
INFEASIBLE_MILP = "infeasible"

INT_TOL = 1e-6
ABS_GAP = 1e-7
ROW_TOL = 1e-8

# native branch-and-bound is the reference engine at desk scale; bigger
# instances go to HiGHS
_NATIVE_MAX_VARS = 40
_NATIVE_MAX_ROWS = 80
_NATIVE_MAX_INTS = 16

# HiGHS proves bounds to its absolute gap of 1e-6; scaling the objective
# tightens the effective gap to 1e-9 < ABS_GAP
_HIGHS_OBJ_SCALE = 1000.0


@dataclass(frozen=True)
class MilpProblem:
    """An LP plus the indices that must take integer values.

    Boxes of integer variables must be bounded so that trust-region
    subproblems stay compact.
    """

    lp: LpProblem
    integer_indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in set(self.integer_indices)))
        object.__setattr__(self, "integer_indices", idx)
        n = self.lp.n
        for i in idx:
            if not 0 <= i < n:
                raise DimensionMismatch(f"integer index {i} outside 0..{n - 1}")
            if not (np.isfinite(self.lp.lower[i]) and np.isfinite(self.lp.upper[i])):
                raise DimensionMismatch(
                    f"integer variable {i} needs a bounded box, got "
                    f"[{self.lp.lower[i]}, {self.lp.upper[i]}]"
                )


@dataclass
class MilpOutcome:
    status: str
    solution: np.ndarray | None = None
    objective_value: float = np.nan
    nodes_explored: int = 0
    # proven lower bound on the optimal value (minimization)
    objective_bound: float = np.nan


def solve_milp(
    p: MilpProblem,
    node_limit: int = 10**6,
    abs_gap: float = ABS_GAP,
    int_tol: float = INT_TOL,
    backend: str = "auto",
) -> MilpOutcome:
    """Globally solve the MILP within `abs_gap`.

    Raises NodeLimitExceeded when the search would pass `node_limit` nodes.
    """
    if backend == "auto":
        lp = p.lp
        small = (
            lp.n <= _NATIVE_MAX_VARS
            and lp.m <= _NATIVE_MAX_ROWS
            and len(p.integer_indices) <= _NATIVE_MAX_INTS
        )
        backend = "bnb" if small else "highs"
    if backend == "bnb":
        out = _solve_bnb(p, node_limit, abs_gap, int_tol)
    elif backend == "highs":
        out = _solve_highs(p, node_limit, int_tol)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if out.status == OPTIMAL_MILP:
        _verify(p, out.solution, int_tol)
    return out


def _verify(p: MilpProblem, x: np.ndarray, int_tol: float) -> None:
    idx = list(p.integer_indices)
    if idx and np.max(np.abs(x[idx] - np.round(x[idx]))) > int_tol:
        raise NumericalBreakdown("MILP solution violates integrality tolerance")
    lp = p.lp
    if lp.m:
        scale = 1.0 + float(np.abs(lp.row_upper).max(initial=0.0))
        if float(np.max(lp.rows @ x - lp.row_upper)) > ROW_TOL * scale:
            raise NumericalBreakdown("MILP solution violates polyhedral rows")
    if np.any(x < lp.lower - 1e-7) or np.any(x > lp.upper + 1e-7):
        raise NumericalBreakdown("MILP solution violates variable bounds")


# ---------------------------------------------------------------------------
# native branch and bound
# ---------------------------------------------------------------------------


def _solve_bnb(p: MilpProblem, node_limit: int, abs_gap: float, int_tol: float) -> MilpOutcome:
    lp = p.lp
    idx = np.array(p.integer_indices, dtype=int)

    root = solve_lp(lp)
    if root.status == UNBOUNDED:
        raise UnboundedRelaxation("root LP relaxation is unbounded")
    nodes = 1
    if root.status == INFEASIBLE:
        return MilpOutcome(status=INFEASIBLE_MILP, nodes_explored=nodes)

    best_x: np.ndarray | None = None
    best_val = np.inf
    counter = itertools.count()
    # heap of (lp bound, tiebreak, lower bounds, upper bounds, lp solution)
    heap = [(root.objective_value, next(counter), lp.lower.copy(), lp.upper.copy(), root.solution)]

    while heap:
        bound, _, lo, hi, x = heapq.heappop(heap)
        if bound >= best_val - abs_gap:
            continue
        frac = np.abs(x[idx] - np.round(x[idx])) if idx.size else np.zeros(0)
        if frac.size == 0 or frac.max() <= int_tol:
            cand_x, cand_val = _polish(lp, idx, lo, hi, x)
            if cand_val < best_val - abs_gap or best_x is None:
                best_x, best_val = cand_x, cand_val
            continue
        j = idx[int(np.argmax(np.minimum(frac, 1.0 - frac)))]
        xj = x[j]
        for side in (0, 1):
            clo, chi = lo.copy(), hi.copy()
            if side == 0:
                chi[j] = np.floor(xj + int_tol)
            else:
                clo[j] = np.ceil(xj - int_tol)
            if clo[j] > chi[j]:
                continue
            if nodes >= node_limit:
                raise NodeLimitExceeded(f"branch-and-bound node limit {node_limit} hit")
            child = solve_lp(
                LpProblem(lp.objective, lp.rows, lp.row_upper, clo, chi)
            )
            nodes += 1
            if child.status != OPTIMAL:
                continue
            if child.objective_value < best_val - abs_gap:
                heapq.heappush(
                    heap,
                    (child.objective_value, next(counter), clo, chi, child.solution),
                )

    if best_x is None:
        return MilpOutcome(status=INFEASIBLE_MILP, nodes_explored=nodes)
    return MilpOutcome(
        status=OPTIMAL_MILP,
        solution=best_x,
        objective_value=best_val,
        nodes_explored=nodes,
        objective_bound=best_val - abs_gap,
    )


def _polish(lp: LpProblem, idx: np.ndarray, lo, hi, x):
    """Fix near-integer components exactly and re-solve the continuous part."""
    if idx.size == 0:
        return x.copy(), float(lp.objective @ x)
    clo, chi = lo.copy(), hi.copy()
    snapped = np.round(x[idx])
    clo[idx] = snapped
    chi[idx] = snapped
    res = solve_lp(LpProblem(lp.objective, lp.rows, lp.row_upper, clo, chi))
    if res.status == OPTIMAL:
        return res.solution, res.objective_value
    return x.copy(), float(lp.objective @ x)


# ---------------------------------------------------------------------------
# HiGHS delegation
# ---------------------------------------------------------------------------


def _solve_highs(p: MilpProblem, node_limit: int, int_tol: float) -> MilpOutcome:
    lp = p.lp
    integrality = np.zeros(lp.n, dtype=int)
    integrality[list(p.integer_indices)] = 1
    constraints = []
    if lp.m:
        constraints.append(LinearConstraint(lp.rows, -np.inf, lp.row_upper))
    res = _scipy_milp(
        c=lp.objective * _HIGHS_OBJ_SCALE,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lp.lower, lp.upper),
        options={"presolve": True, "node_limit": node_limit, "mip_rel_gap": 0.0},
    )
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return MilpOutcome(status=INFEASIBLE_MILP, nodes_explored=nodes)
    if res.status == 3:
        raise UnboundedRelaxation("HiGHS reports the relaxation unbounded")
    if res.status == 1:
        raise NodeLimitExceeded(f"HiGHS node limit {node_limit} hit")
    if res.status != 0 or res.x is None:
        raise NumericalBreakdown(f"HiGHS failed: {res.message}")

    idx = np.array(p.integer_indices, dtype=int)
    x, val = _maybe_polish_scipy(lp, idx, res.x)
    dual = getattr(res, "mip_dual_bound", None)
    bound = val if dual is None else float(dual) / _HIGHS_OBJ_SCALE
    return MilpOutcome(
        status=OPTIMAL_MILP,
        solution=x,
        objective_value=val,
        nodes_explored=nodes,
        objective_bound=min(bound, val),
    )


def _maybe_polish_scipy(lp: LpProblem, idx: np.ndarray, x: np.ndarray):
    """Fix integers and clean the continuous part with an LP re-solve, unless
    the raw point is already integral and row-feasible to 1e-9."""
    from scipy.optimize import linprog as _scipy_linprog

    if idx.size == 0:
        return x.copy(), float(lp.objective @ x)
    int_err = float(np.max(np.abs(x[idx] - np.round(x[idx]))))
    if int_err <= 1e-9:
        clean = x.copy()
        clean[idx] = np.round(clean[idx])
        scale = 1.0 + float(np.abs(lp.row_upper).max(initial=0.0))
        row_err = float(np.max(lp.rows @ clean - lp.row_upper)) if lp.m else 0.0
        bnd_ok = np.all(clean >= lp.lower - 1e-12) and np.all(clean <= lp.upper + 1e-12)
        if row_err <= 1e-9 * scale and bnd_ok:
            return clean, float(lp.objective @ clean)
    clo, chi = lp.lower.copy(), lp.upper.copy()
    snapped = np.round(x[idx])
    clo[idx] = snapped
    chi[idx] = snapped
    res = _scipy_linprog(
        c=lp.objective,
        A_ub=lp.rows if lp.m else None,
        b_ub=lp.row_upper if lp.m else None,
        bounds=np.column_stack([clo, chi]),
        method="highs",
        options={"presolve": True, "primal_feasibility_tolerance": 1e-10},
    )
    if res.status == 0:
        return np.asarray(res.x, dtype=float), float(lp.objective @ res.x)
    return x.copy(), float(lp.objective @ x)


# ---------------------------------------------------------------------------
# exhaustive enumeration (global oracle for tiny instances)
# ---------------------------------------------------------------------------


def enumerate_milp_minimum(p: MilpProblem, assignment_limit: int = 200_000):
    """Globally minimize by enumerating every integer assignment and solving
    the continuous LP for each.  Independent of the branch-and-bound path;
    intended for tiny instances and as a test oracle.

    Returns (value, solution) or (inf, None) when infeasible.
    """
    lp = p.lp
    idx = np.array(sorted(p.integer_indices), dtype=int)
    ranges = []
    total = 1
    for i in idx:
        lo_i = int(np.ceil(lp.lower[i] - 1e-9))
        hi_i = int(np.floor(lp.upper[i] + 1e-9))
        if hi_i < lo_i:
            return np.inf, None
        ranges.append(np.arange(lo_i, hi_i + 1, dtype=float))
        total *= hi_i - lo_i + 1
        if total > assignment_limit:
            raise NodeLimitExceeded(
                f"enumeration would visit {total} assignments (> {assignment_limit})"
            )
    cont = np.setdiff1d(np.arange(lp.n), idx)
    grids = np.meshgrid(*ranges, indexing="ij") if len(ranges) else []
    combos = (
        np.stack([g.ravel() for g in grids], axis=1)
        if grids
        else np.zeros((1, 0))
    )

    if cont.size == 0:
        # pure integer: vectorized feasibility over all assignments at once
        feas = np.ones(combos.shape[0], dtype=bool)
        if lp.m:
            scale = 1.0 + np.abs(lp.row_upper).max(initial=0.0)
            resid = combos @ lp.rows[:, idx].T - lp.row_upper
            feas = resid.max(axis=1) <= ROW_TOL * scale
        if not feas.any():
            return np.inf, None
        vals = combos[feas] @ lp.objective[idx]
        k = int(np.argmin(vals))
        x = np.zeros(lp.n)
        x[idx] = combos[feas][k]
        return float(vals[k]), x

    # mixed: eliminate fixed integer columns, solve the reduced LP per combo
    A_int = lp.rows[:, idx] if lp.m else np.zeros((0, idx.size))
    A_cont = lp.rows[:, cont] if lp.m else np.zeros((0, cont.size))
    c_int, c_cont = lp.objective[idx], lp.objective[cont]
    best_val, best_x = np.inf, None
    for combo in combos:
        rhs = lp.row_upper - A_int @ combo if lp.m else lp.row_upper
        res = solve_lp(LpProblem(c_cont, A_cont, rhs, lp.lower[cont], lp.upper[cont]))
        if res.status == OPTIMAL:
            val = res.objective_value + float(c_int @ combo)
            if val < best_val:
                x = np.zeros(lp.n)
                x[idx] = combo
                x[cont] = res.solution
                best_val, best_x = val, x
    return best_val, best_x
