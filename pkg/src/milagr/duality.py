"""Primal-dual machinery for cone targets.

With the target a product of zero sets and nonpositive orthants, the dual
domain is its polar cone, the generalized Lagrangian equals the classical one
on the polar and is minus infinity outside, and approximate KKT points are
local saddle points of both the Lagrangian and the augmented Lagrangian.
This module computes those measures and verifies the equivalences
numerically, including the proximal-point reading of one augmented
Lagrangian step on the dual function.

Convention note: one step of the augmented Lagrangian with penalty mu acts on
the dual function as a proximal step whose quadratic weight is mu/2 (dual
stepsize 1/mu).  ``prox_dual`` follows that convention so the two routes of
``verify_prox_equivalence`` are comparable for every mu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alm import s_mu
from .criticality import MilaConfig, PlNorm, mila_solve, psi
from .errors import ConfigError, OracleResolutionInsufficient
from .linprog import OPTIMAL, LpProblem, solve_lp
from .milp import enumerate_milp_minimum, solve_milp
from .model import (
    ConvexTarget,
    FreeSpace,
    NonnegativeOrthant,
    NonpositiveOrthant,
    SmoothProgram,
    ZeroSet,
    grad_x_lagrangian,
    in_normal_cone,
    lagrangian,
)

DELTA_SWEEP = (1e-2, 1e-1, 1.0, 10.0)


class _MinusInfinity:
    """Explicit sentinel for the generalized Lagrangian outside the dual
    domain; never enters floating-point arithmetic."""

    __slots__ = ()

    def __repr__(self):
        return "MINUS_INFINITY"


MINUS_INFINITY = _MinusInfinity()


# ---------------------------------------------------------------------------
# polar cones and the dual domain
# ---------------------------------------------------------------------------

_POLAR = {
    ZeroSet: lambda b: FreeSpace(b.dim),
    FreeSpace: lambda b: ZeroSet(b.dim),
    NonpositiveOrthant: lambda b: NonnegativeOrthant(b.dim),
    NonnegativeOrthant: lambda b: NonpositiveOrthant(b.dim),
}


def polar(K: ConvexTarget) -> ConvexTarget:
    """Blockwise polar cone; an involution on these primitives."""
    out = []
    for b in K.blocks:
        fn = _POLAR.get(type(b))
        if fn is None:
            raise ConfigError(f"{type(b).__name__} block is not a cone")
        out.append(fn(b))
    return ConvexTarget(tuple(out))


def dual_domain_lower(K: ConvexTarget) -> np.ndarray:
    """Coordinatewise lower bounds of the polar cone (0 on orthant rows,
    unbounded on equality rows)."""
    lo = np.empty(K.dim)
    for b, s in K.slices():
        if isinstance(b, ZeroSet):
            lo[s] = -np.inf
        elif isinstance(b, NonpositiveOrthant):
            lo[s] = 0.0
        else:
            raise ConfigError(f"{type(b).__name__} block is not a primal cone")
    return lo


def in_dual_domain(K: ConvexTarget, y, tol: float = 1e-9) -> bool:
    lo = dual_domain_lower(K)
    y = np.asarray(y, dtype=float).ravel()
    return bool(np.all(y >= lo - tol))


def generalized_lagrangian(P: SmoothProgram, x, y):
    """L(x, y) on the polar cone, MINUS_INFINITY sentinel outside it."""
    if P.m == 0:
        return P.objective(x)
    if not in_dual_domain(P.C, y, tol=0.0):
        return MINUS_INFINITY
    return lagrangian(P, x, y)


# ---------------------------------------------------------------------------
# dual criticality measures (small LPs over the polar cone)
# ---------------------------------------------------------------------------


def _psi_dual_lp(grad_y: np.ndarray, y: np.ndarray, lo: np.ndarray, Delta: float) -> float:
    """max { <-grad_y, y - w> : w in polar, |w - y|_inf <= Delta }."""
    wlo = np.maximum(lo, y - Delta)
    whi = y + Delta
    out = solve_lp(LpProblem(-grad_y, np.zeros((0, y.size)), [], wlo, whi))
    if out.status != OPTIMAL:
        raise ConfigError("dual trust-region LP failed; is y in the dual domain?")
    val = float(-grad_y @ y) - out.objective_value
    return max(val, 0.0)


def psi_dual(P: SmoothProgram, x, y, Delta: float) -> float:
    """Criticality of the concave dual side of the Lagrangian at y:
    max of <-c(x), y - w> over the polar cone intersected with the ball."""
    y = np.asarray(y, dtype=float).ravel()
    lo = dual_domain_lower(P.C)
    if not in_dual_domain(P.C, y):
        raise ValueError("y lies outside the dual domain")
    return _psi_dual_lp(P.constraint(x), y, lo, Delta)


def psi_dual_aug(P: SmoothProgram, x, y, mu: float, Delta: float) -> float:
    """Same measure for the augmented Lagrangian: grad_y = c(x) - s_mu(x,y)."""
    y = np.asarray(y, dtype=float).ravel()
    lo = dual_domain_lower(P.C)
    if not in_dual_domain(P.C, y):
        raise ValueError("y lies outside the dual domain")
    g = P.constraint(x) - s_mu(P, x, y, mu)
    return _psi_dual_lp(g, y, lo, Delta)


# ---------------------------------------------------------------------------
# saddle-point verification
# ---------------------------------------------------------------------------


@dataclass
class SaddleCertificate:
    x: np.ndarray
    y: np.ndarray
    Delta: float
    psi_primal: float
    psi_dual: float


@dataclass
class SaddleReport:
    kkt_critical: bool
    saddle_lagrangian: bool
    saddle_augmented: dict
    certificate: SaddleCertificate | None = None

    @property
    def all_equivalent(self) -> bool:
        vals = [self.kkt_critical, self.saddle_lagrangian, *self.saddle_augmented.values()]
        return all(v == vals[0] for v in vals)

    @property
    def all_hold(self) -> bool:
        return self.kkt_critical and self.all_equivalent


def verify_saddle_equivalence(
    P: SmoothProgram,
    x,
    y,
    Delta: float | None = None,
    mus=(0.1, 1.0, 10.0),
    tol: float = 1e-8,
) -> SaddleReport:
    """Check numerically that KKT-criticality of (x, y), the saddle property
    of the Lagrangian, and the saddle property of the augmented Lagrangian at
    each tested mu agree.  A certificate passes if some radius in the sweep
    works (the measures are monotone in the radius)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    sweep = (Delta,) if Delta is not None else DELTA_SWEEP
    in_x = P.X.contains(x, 1e-6)
    y_ok = P.m == 0 or in_dual_domain(P.C, y)

    def psi_primal(grad, D):
        # tightened MILP gap so the measure resolves below the 1e-8 tolerance
        return psi((grad, P.X), x, D, abs_gap=1e-12).value

    kkt = False
    sad_l = False
    sad_mu = {float(m): False for m in mus}
    cert = None
    if in_x:
        gl = grad_x_lagrangian(P, x, y)
        for D in sweep:
            pp = psi_primal(gl, D)
            if pp > tol:
                continue
            if P.m == 0:
                kkt = sad_l = True
                for m in sad_mu:
                    sad_mu[m] = True
                cert = SaddleCertificate(x, y, D, pp, 0.0)
                break
            # membership tolerance scales mildly with the multiplier so the
            # three tests react to a constraint violation at the same order
            if in_normal_cone(P.C, P.constraint(x), y, tol * (1.0 + float(np.linalg.norm(y)))):
                kkt = True
            if y_ok:
                pd = psi_dual(P, x, y, D)
                if pd <= tol:
                    sad_l = True
                    cert = SaddleCertificate(x, y, D, pp, pd)
                for m in list(sad_mu):
                    ppm = psi_primal(grad_x_lagrangian(P, x, _y_aug(P, x, y, m)), D)
                    pdm = psi_dual_aug(P, x, y, m, D)
                    if ppm <= tol and pdm <= tol:
                        sad_mu[m] = True
            if kkt and sad_l and all(sad_mu.values()):
                break
    return SaddleReport(kkt, sad_l, sad_mu, cert)


def _y_aug(P, x, y, mu):
    """Multiplier that makes grad_x L_mu(x, y) = grad_x L(x, y_aug)."""
    cx = P.constraint(x)
    return y + (cx - s_mu(P, x, y, mu)) / mu


# ---------------------------------------------------------------------------
# dual function and proximal oracle
# ---------------------------------------------------------------------------


def dual_function(
    P: SmoothProgram,
    y,
    method: str = "enumerate",
    grid: int = 201,
    refine: int = 60,
    mila_eps: float = 1e-8,
) -> float:
    """Q(y) = inf of L(., y) over the mixed-integer set.

    ``enumerate`` globally minimizes by integer enumeration plus a dense-grid
    coordinate search on the (at most two) continuous variables; ``mila``
    settles for a critical point and is flagged lower-confidence in the
    docstring sense."""
    y = np.asarray(y, dtype=float).ravel()
    if method == "mila":
        start = solve_milp(P.X.as_milp(np.zeros(P.n))).solution
        res = mila_solve(
            lambda xx: lagrangian(P, xx, y),
            lambda xx: grad_x_lagrangian(P, xx, y),
            P.X,
            start,
            mila_eps,
        )
        return float(lagrangian(P, res.x, y))
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    return _global_min_enumerate(
        P, lambda xx: lagrangian(P, xx, y), lambda xx: grad_x_lagrangian(P, xx, y), grid, refine
    )


def _global_min_enumerate(P: SmoothProgram, fun, grad, grid: int, refine: int) -> float:
    X = P.X
    idx = np.array(X.integer_indices, dtype=int)
    cont = np.setdiff1d(np.arange(X.n), idx)
    if cont.size > 2:
        raise OracleResolutionInsufficient(
            "enumeration oracle handles at most two continuous variables"
        )
    if cont.size and not (
        np.all(np.isfinite(X.lower[cont])) and np.all(np.isfinite(X.upper[cont]))
    ):
        raise OracleResolutionInsufficient("continuous variables need finite boxes")

    combos = [np.zeros(0)]
    if idx.size:
        ranges = [
            np.arange(int(np.ceil(X.lower[i] - 1e-9)), int(np.floor(X.upper[i] + 1e-9)) + 1)
            for i in idx
        ]
        grids = np.meshgrid(*ranges, indexing="ij")
        combos = np.stack([g.ravel() for g in grids], axis=1)

    best = np.inf
    for combo in combos:
        x0 = np.zeros(X.n)
        if idx.size:
            x0[idx] = combo
        val = _min_continuous(X, cont, x0, fun, grid, refine)
        best = min(best, val)
    return best


def _min_continuous(X, cont, x0, fun, grid: int, refine: int) -> float:
    """Dense grid over the continuous box + golden-section coordinate
    refinement, honoring the polyhedral rows by +inf outside."""

    def feasible_value(xc):
        x = x0.copy()
        x[cont] = xc
        if X.m:
            scale = 1.0 + float(np.abs(X.row_upper).max(initial=0.0))
            if float(np.max(X.rows @ x - X.row_upper)) > 1e-9 * scale:
                return np.inf
        return float(fun(x))

    if cont.size == 0:
        return feasible_value(np.zeros(0))

    axes = [np.linspace(X.lower[i], X.upper[i], grid) for i in cont]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    vals = np.array([feasible_value(p) for p in pts])
    k = int(np.argmin(vals))
    best_pt = pts[k].copy()
    best = vals[k]
    if not np.isfinite(best):
        return np.inf

    # coordinate golden-section passes around the best grid point
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    width = np.array([(a[1] - a[0]) if a.size > 1 else 0.0 for a in axes])
    for _ in range(refine):
        improved = False
        for d in range(cont.size):
            lo = max(X.lower[cont[d]], best_pt[d] - 2 * max(width[d], 1e-9))
            hi = min(X.upper[cont[d]], best_pt[d] + 2 * max(width[d], 1e-9))
            a, b = lo, hi
            c1 = b - phi * (b - a)
            c2 = a + phi * (b - a)
            p1, p2 = best_pt.copy(), best_pt.copy()
            for _ in range(70):
                p1[d], p2[d] = c1, c2
                f1, f2 = feasible_value(p1), feasible_value(p2)
                if f1 <= f2:
                    b, c2 = c2, c1
                    c1 = b - phi * (b - a)
                else:
                    a, c1 = c1, c2
                    c2 = a + phi * (b - a)
                if b - a < 1e-9:
                    break
            mid = 0.5 * (a + b)
            p1[d] = mid
            v = feasible_value(p1)
            if v < best - 1e-15:
                best = v
                best_pt[d] = mid
                improved = True
        width *= 0.5
        if not improved and width.max(initial=0.0) < 1e-9:
            break
    return best


def prox_dual(P: SmoothProgram, w, mu: float, grid: int = 201) -> np.ndarray:
    """Independent oracle for the proximal step on the negated dual function:
    argmax over the polar cone of Q(y) - (mu/2) |y - w|^2, by dense grid plus
    interval refinement per dual coordinate (m <= 2)."""
    w = np.asarray(w, dtype=float).ravel()
    m = P.m
    if m == 0:
        return np.zeros(0)
    if m > 2:
        raise OracleResolutionInsufficient("prox oracle handles m <= 2")
    lo = dual_domain_lower(P.C)

    def G(yv):
        q = dual_function(P, yv, method="enumerate", grid=grid)
        return q - 0.5 * mu * float((yv - w) @ (yv - w))

    # strong concavity bounds the maximizer: mu/2 |y-w|^2 <= Q(y*) - Q(w) and
    # Q is concave, so a generous radius suffices
    radius = 10.0 + 20.0 / mu
    y = np.maximum(w, lo).astype(float)
    y = np.where(np.isfinite(y), y, 0.0)
    for _ in range(40):
        improved = False
        for d in range(m):
            a = max(lo[d], y[d] - radius) if np.isfinite(lo[d]) else y[d] - radius
            b = y[d] + radius
            cand = np.linspace(a, b, grid)
            vals = []
            yy = y.copy()
            for cv in cand:
                yy[d] = cv
                vals.append(G(yy))
            k = int(np.argmax(vals))
            if abs(cand[k] - y[d]) > 1e-12:
                improved = True
            y[d] = cand[k]
        radius /= 8.0
        if radius < 1e-7 / 4 and not improved:
            break
        if radius < 1e-9:
            break
    return y


@dataclass
class ProxReport:
    y_al: np.ndarray
    y_oracle: np.ndarray
    x_bar: np.ndarray
    gap: float
    x_critical: bool

    def ok(self, tol: float = 1e-4) -> bool:
        return self.gap <= tol and self.x_critical


def verify_prox_equivalence(
    P: SmoothProgram,
    w,
    mu: float,
    x0=None,
    tol: float = 1e-4,
    grid: int = 201,
) -> ProxReport:
    """Run one augmented Lagrangian inner step at multiplier w and compare its
    first-order dual update against the grid proximal oracle; also check the
    primal point is critical for the Lagrangian at the updated multiplier."""
    w = np.asarray(w, dtype=float).ravel()
    if x0 is None:
        x0 = solve_milp(P.X.as_milp(np.zeros(P.n))).solution
    from .alm import aug_lagrangian, aug_lagrangian_grad_x

    res = mila_solve(
        lambda xx: aug_lagrangian(P, xx, w, mu),
        lambda xx: aug_lagrangian_grad_x(P, xx, w, mu),
        P.X,
        x0,
        1e-9,
        cfg=MilaConfig(delta_min=1e-12),
    )
    x_bar = res.x
    cx = P.constraint(x_bar)
    s_bar = P.C.project(cx + mu * w)
    y_al = w + (cx - s_bar) / mu
    y_or = prox_dual(P, w, mu, grid=grid)
    gap = float(np.max(np.abs(y_al - y_or))) if P.m else 0.0
    crit = psi((grad_x_lagrangian(P, x_bar, y_al), P.X), x_bar, max(res.Delta, 1e-3)).value <= 1e-6
    return ProxReport(y_al=y_al, y_oracle=y_or, x_bar=x_bar, gap=gap, x_critical=crit)
