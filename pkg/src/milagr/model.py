"""Problem-data layer: mixed-integer linear sets, projection-friendly convex
targets, and smooth programs  min f(x)  s.t.  x in X,  c(x) in C.

Targets are ordered products of three closed convex primitives (zero sets,
nonpositive orthants, boxes), which keeps every projection closed-form.
Derivatives are user-supplied callables; ``validate_derivatives`` checks them
against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch
from .milp import INFEASIBLE_MILP, MilpProblem, solve_milp
from .linprog import LpProblem

DEFAULT_TOL = 1e-6


# ---------------------------------------------------------------------------
# convex target
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroSet:
    dim: int

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.zeros_like(v)


@dataclass(frozen=True)
class NonpositiveOrthant:
    dim: int

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.minimum(v, 0.0)


@dataclass(frozen=True)
class FreeSpace:
    """Whole space; arises as the polar of a zero set."""

    dim: int

    def project(self, v: np.ndarray) -> np.ndarray:
        return v.copy()


@dataclass(frozen=True)
class NonnegativeOrthant:
    """Polar of the nonpositive orthant; the natural home of inequality
    multipliers."""

    dim: int

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.maximum(v, 0.0)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(a) for a in np.atleast_1d(self.lo))
        hi = tuple(float(a) for a in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise DimensionMismatch("box bounds differ in length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("box has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, np.asarray(self.lo), np.asarray(self.hi))


Block = ZeroSet | NonpositiveOrthant | Box | FreeSpace | NonnegativeOrthant


@dataclass(frozen=True)
class ConvexTarget:
    """Ordered product of primitive closed convex sets; total dimension m."""

    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    def slices(self):
        out, k = [], 0
        for b in self.blocks:
            out.append((b, slice(k, k + b.dim)))
            k += b.dim
        return out

    def project(self, v: np.ndarray) -> np.ndarray:
        v = _check_dim(v, self.dim)
        z = np.empty_like(v)
        for b, s in self.slices():
            z[s] = b.project(v[s])
        return z

    def distance(self, v: np.ndarray) -> float:
        v = _check_dim(v, self.dim)
        return float(np.linalg.norm(v - self.project(v)))

    def contains(self, v: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
        return self.distance(v) <= tol


def _check_dim(v, m: int) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if v.size != m:
        raise DimensionMismatch(f"expected vector of length {m}, got {v.size}")
    return v


def project(C: ConvexTarget, v) -> np.ndarray:
    return C.project(v)


def distance(C: ConvexTarget, v) -> float:
    return C.distance(v)


def in_normal_cone(C: ConvexTarget, z, y, tol: float = 1e-8) -> bool:
    """Whether y is a normal direction of C at z (within tol).

    Uses the projection characterization with unit step: y normal at z iff
    z = proj(z + y).  Points farther than tol from C have an empty cone.
    """
    z = _check_dim(z, C.dim)
    y = _check_dim(y, C.dim)
    if C.distance(z) > tol:
        return False
    return float(np.linalg.norm(z - C.project(z + y))) <= tol


# ---------------------------------------------------------------------------
# mixed-integer linear set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixedIntegerLinearSet:
    """Polyhedron {x : A x <= b, l <= x <= u} intersected with integrality on
    the index set.  Integer boxes must be bounded; nonemptiness is certified
    by one feasibility solve at construction (skippable for trusted data)."""

    rows: np.ndarray
    row_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer_indices: tuple
    check_nonempty: bool = True

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        n = lower.size
        rows = np.asarray(self.rows, dtype=float)
        if rows.size == 0:
            rows = rows.reshape(0, n)
        rows = np.atleast_2d(rows)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "row_upper", np.asarray(self.row_upper, dtype=float).ravel())
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float).ravel())
        object.__setattr__(
            self, "integer_indices", tuple(sorted(int(i) for i in set(self.integer_indices)))
        )
        # MilpProblem construction validates dimensions and integer boxes
        prob = self.as_milp(np.zeros(self.n))
        if self.check_nonempty:
            out = solve_milp(prob)
            if out.status == INFEASIBLE_MILP:
                raise ValueError("mixed-integer linear set is empty")

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    def as_milp(self, objective: np.ndarray) -> MilpProblem:
        lp = LpProblem(objective, self.rows, self.row_upper, self.lower, self.upper)
        return MilpProblem(lp, self.integer_indices)

    def contains(self, x, tol: float = DEFAULT_TOL) -> bool:
        x = _check_dim(x, self.n)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        if self.m:
            scale = 1.0 + float(np.abs(self.row_upper).max(initial=0.0))
            if float(np.max(self.rows @ x - self.row_upper)) > tol * scale:
                return False
        idx = list(self.integer_indices)
        if idx and float(np.max(np.abs(x[idx] - np.round(x[idx])))) > tol:
            return False
        return True


# ---------------------------------------------------------------------------
# smooth program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothProgram:
    """Full instance of the constrained problem: smooth objective f and
    constraint map c with first derivatives, over x in X with c(x) in C."""

    n: int
    m: int
    f: Callable[[np.ndarray], float]
    grad_f: Callable[[np.ndarray], np.ndarray]
    c: Callable[[np.ndarray], np.ndarray] | None
    jac_c: Callable[[np.ndarray], np.ndarray] | None
    X: MixedIntegerLinearSet
    C: ConvexTarget
    name: str = ""

    def __post_init__(self):
        if self.X.n != self.n:
            raise DimensionMismatch("X dimension differs from n")
        if self.C.dim != self.m:
            raise DimensionMismatch("C dimension differs from m")
        if self.m and (self.c is None or self.jac_c is None):
            raise DimensionMismatch("m > 0 requires c and jac_c callables")

    def constraint(self, x) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return np.asarray(self.c(x), dtype=float).ravel()

    def jacobian(self, x) -> np.ndarray:
        if self.m == 0:
            return np.zeros((0, self.n))
        return np.atleast_2d(np.asarray(self.jac_c(x), dtype=float))

    def objective(self, x) -> float:
        return float(self.f(np.asarray(x, dtype=float)))

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.grad_f(np.asarray(x, dtype=float)), dtype=float).ravel()


@dataclass(frozen=True)
class LagrangePair:
    x: np.ndarray
    y: np.ndarray


def lagrangian(P: SmoothProgram, x, y) -> float:
    """L(x, y) = f(x) + <y, c(x)>."""
    y = _check_dim(y, P.m)
    return P.objective(x) + float(y @ P.constraint(x))


def grad_x_lagrangian(P: SmoothProgram, x, y) -> np.ndarray:
    y = _check_dim(y, P.m)
    g = P.gradient(x)
    if P.m:
        g = g + P.jacobian(x).T @ y
    return g


# ---------------------------------------------------------------------------
# derivative validation
# ---------------------------------------------------------------------------


@dataclass
class DerivativeReport:
    max_rel_error_f: float
    max_rel_error_c: float
    samples: int
    seed: int

    def ok(self, tol: float = 1e-5) -> bool:
        return self.max_rel_error_f <= tol and self.max_rel_error_c <= tol


def validate_derivatives(P: SmoothProgram, samples: int = 20, seed: int = 0) -> DerivativeReport:
    """Compare analytic derivatives against central finite differences at
    random points drawn inside the variable boxes (window [-2, 2] where a
    bound is infinite)."""
    rng = np.random.default_rng(seed)
    lo = np.where(np.isfinite(P.X.lower), P.X.lower, -2.0)
    hi = np.where(np.isfinite(P.X.upper), P.X.upper, 2.0)
    hi = np.maximum(hi, lo)
    err_f = 0.0
    err_c = 0.0
    for _ in range(samples):
        x = lo + rng.random(P.n) * (hi - lo)
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        g_fd = np.empty(P.n)
        J_fd = np.empty((P.m, P.n)) if P.m else None
        for i in range(P.n):
            e = np.zeros(P.n)
            e[i] = h[i]
            g_fd[i] = (P.objective(x + e) - P.objective(x - e)) / (2 * h[i])
            if P.m:
                J_fd[:, i] = (P.constraint(x + e) - P.constraint(x - e)) / (2 * h[i])
        g = P.gradient(x)
        err_f = max(err_f, _rel_err(g, g_fd))
        if P.m:
            err_c = max(err_c, _rel_err(P.jacobian(x), J_fd))
    return DerivativeReport(err_f, err_c, samples, seed)


def _rel_err(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(1.0, float(np.max(np.abs(a))) if a.size else 0.0)
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    return diff / denom
