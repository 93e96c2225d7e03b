"""Dense bounded-variable revised simplex.

Solves  min c'x  s.t.  A x <= b,  l <= x <= u  with possibly infinite bounds.
Used as the relaxation engine for branch-and-bound and for the small LPs
arising from dual criticality measures.  Two phases: phase 1 drives artificial
variables out of the basis, phase 2 optimizes the true objective.  Dantzig
pricing by default; Bland's rule takes over once the degenerate-pivot counter
exceeds 2*(n+m) to guarantee termination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalBreakdown

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEAS_TOL = 1e-8
PIVOT_TOL = 1e-10
DUAL_TOL = 1e-9

_BASIC, _AT_LOWER, _AT_UPPER, _FREE = 0, 1, 2, 3


@dataclass(frozen=True)
class LpProblem:
    """Data of one linear program. Immutable; safe to share across solves."""

    objective: np.ndarray
    rows: np.ndarray
    row_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        A = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if A.size == 0:
            A = A.reshape(0, c.size)
        b = np.asarray(self.row_upper, dtype=float).ravel()
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "rows", A)
        object.__setattr__(self, "row_upper", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        n = c.size
        if A.shape[1] != n or lo.size != n or hi.size != n or b.size != A.shape[0]:
            raise DimensionMismatch(
                f"inconsistent LP dimensions: c{n}, A{A.shape}, b{b.size}, "
                f"l{lo.size}, u{hi.size}"
            )
        both = np.isfinite(lo) & np.isfinite(hi)
        if np.any(lo[both] > hi[both] + 0.0):
            # an empty box is legitimate input; the solver reports infeasible
            pass

    @property
    def n(self) -> int:
        return self.objective.size

    @property
    def m(self) -> int:
        return self.rows.shape[0]


@dataclass
class LpOutcome:
    """Result of one LP solve.

    ``witness`` carries a Farkas-type certificate: an improving ray for
    unbounded problems, nonnegative row multipliers proving emptiness for
    infeasible ones.  ``duals`` holds the row prices of the final basis.
    """

    status: str
    solution: np.ndarray | None = None
    objective_value: float = np.nan
    duals: np.ndarray | None = None
    witness: np.ndarray | None = None
    iterations: int = 0


def solve_lp(p: LpProblem, max_iter: int | None = None) -> LpOutcome:
    """Solve the LP. Raises NumericalBreakdown if the pivot cap is hit."""
    if p.m == 0:
        return _solve_boxed(p)
    if np.any(p.lower > p.upper + FEAS_TOL):
        return LpOutcome(status=INFEASIBLE, witness=np.zeros(p.m))
    return _Simplex(p, max_iter).run()


def _solve_boxed(p: LpProblem) -> LpOutcome:
    """No rows: optimize each coordinate against its bounds independently."""
    c, lo, hi = p.objective, p.lower, p.upper
    if np.any(lo > hi + FEAS_TOL):
        return LpOutcome(status=INFEASIBLE, witness=np.zeros(0))
    x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    x = np.where((c < 0) & np.isfinite(hi), hi, x)
    x = np.where((c > 0) & np.isfinite(lo), lo, x)
    ray = np.zeros(p.n)
    unb_up = (c < -DUAL_TOL) & ~np.isfinite(hi)
    unb_dn = (c > DUAL_TOL) & ~np.isfinite(lo)
    if np.any(unb_up) or np.any(unb_dn):
        ray[unb_up] = 1.0
        ray[unb_dn] = -1.0
        return LpOutcome(status=UNBOUNDED, witness=ray)
    x = np.clip(x, lo, hi)
    return LpOutcome(
        status=OPTIMAL,
        solution=x,
        objective_value=float(c @ x),
        duals=np.zeros(0),
    )


class _Simplex:
    """Work space for one solve over the slack-extended system [A I] v = b."""

    def __init__(self, p: LpProblem, max_iter: int | None):
        self.p = p
        n, m = p.n, p.m
        self.n, self.m = n, m
        self.W = np.hstack([p.rows, np.eye(m)])
        self.lo = np.concatenate([p.lower, np.zeros(m)])
        self.hi = np.concatenate([p.upper, np.full(m, np.inf)])
        self.cost = np.concatenate([p.objective, np.zeros(m)])
        self.max_iter = max_iter or max(2000, 80 * (n + m))
        self.iterations = 0
        self.n_art = 0

    # -- setup -------------------------------------------------------------

    def _initial_point(self):
        """Nonbasic structurals at their nearest finite bound, slacks basic."""
        lo, hi = self.lo, self.hi
        N = self.W.shape[1]
        vals = np.zeros(N)
        status = np.full(N, _AT_LOWER, dtype=np.int8)
        for j in range(self.n):
            lf, uf = np.isfinite(lo[j]), np.isfinite(hi[j])
            if lf and uf:
                if abs(lo[j]) <= abs(hi[j]):
                    vals[j], status[j] = lo[j], _AT_LOWER
                else:
                    vals[j], status[j] = hi[j], _AT_UPPER
            elif lf:
                vals[j], status[j] = lo[j], _AT_LOWER
            elif uf:
                vals[j], status[j] = hi[j], _AT_UPPER
            else:
                vals[j], status[j] = 0.0, _FREE
        return vals, status

    def run(self) -> LpOutcome:
        m, n = self.m, self.n
        b = self.p.row_upper
        vals, status = self._initial_point()
        resid = b - self.W[:, :n] @ vals[:n]

        # rows whose slack would start negative get an artificial column -e_i
        bad = resid < -FEAS_TOL
        self.n_art = int(bad.sum())
        if self.n_art:
            D = -np.eye(m)[:, bad]
            self.W = np.hstack([self.W, D])
            self.lo = np.concatenate([self.lo, np.zeros(self.n_art)])
            self.hi = np.concatenate([self.hi, np.full(self.n_art, np.inf)])
            self.cost = np.concatenate([self.cost, np.zeros(self.n_art)])
            vals = np.concatenate([vals, np.zeros(self.n_art)])
            status = np.concatenate(
                [status, np.full(self.n_art, _AT_LOWER, dtype=np.int8)]
            )

        basis = np.arange(n, n + m)
        art_ids = np.arange(self.W.shape[1] - self.n_art, self.W.shape[1])
        basis[bad] = art_ids
        status[basis] = _BASIC
        self.vals, self.status, self.basis = vals, status, basis
        self.Binv = np.linalg.inv(self.W[:, basis])
        self._recompute_basics()

        if self.n_art:
            phase1 = np.zeros(self.W.shape[1])
            phase1[art_ids] = 1.0
            res = self._optimize(phase1, phase=1)
            if res is not None:
                return res
            infeas = float(phase1 @ self.vals)
            scale = 1.0 + float(np.abs(b).max(initial=0.0))
            if infeas > FEAS_TOL * scale * 10:
                y = phase1[self.basis] @ self.Binv
                lam = np.maximum(-y, 0.0)
                return LpOutcome(
                    status=INFEASIBLE, witness=lam, iterations=self.iterations
                )
            # pin leftover artificials at zero so they never move again
            self.hi[art_ids] = 0.0
            self.lo[art_ids] = 0.0

        res = self._optimize(self.cost, phase=2)
        if res is not None:
            return res
        return self._finish()

    # -- core loop ----------------------------------------------------------

    def _recompute_basics(self):
        nb = self.status != _BASIC
        rhs = self.p.row_upper - self.W[:, nb] @ self.vals[nb]
        self.vals[self.basis] = self.Binv @ rhs

    def _refactor(self):
        B = self.W[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise NumericalBreakdown("singular basis during refactorization") from exc
        self._recompute_basics()

    def _optimize(self, cost, phase: int):
        """Pivot until optimal for `cost`. Returns an LpOutcome only on
        unboundedness; None means the phase finished optimal."""
        m = self.m
        degen = 0
        bland_after = 2 * (self.n + m)
        fixed = self.hi - self.lo <= 0.0  # never eligible to move
        since_refactor = 0

        while True:
            if self.iterations >= self.max_iter:
                raise NumericalBreakdown(
                    f"simplex cycling guard exceeded ({self.max_iter} pivots)"
                )
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.W
            st = self.status
            elig = (
                ((st == _AT_LOWER) & (d < -DUAL_TOL))
                | ((st == _AT_UPPER) & (d > DUAL_TOL))
                | ((st == _FREE) & (np.abs(d) > DUAL_TOL))
            )
            elig &= ~fixed
            if phase == 2 and self.n_art:
                elig[-self.n_art :] = False
            if not elig.any():
                return None

            if degen > bland_after:
                j = int(np.flatnonzero(elig)[0])
            else:
                score = np.where(elig, np.abs(d), -np.inf)
                j = int(np.argmax(score))
            sigma = 1.0 if (st[j] == _AT_LOWER or (st[j] == _FREE and d[j] < 0)) else -1.0

            alpha = self.Binv @ self.W[:, j]
            delta = -sigma * alpha
            xB = self.vals[self.basis]
            loB, hiB = self.lo[self.basis], self.hi[self.basis]

            ratios = np.full(m, np.inf)
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            with np.errstate(invalid="ignore"):
                rd = (xB[dec] - loB[dec]) / (-delta[dec])
                ru = (hiB[inc] - xB[inc]) / delta[inc]
            rd[~np.isfinite(loB[dec])] = np.inf
            ru[~np.isfinite(hiB[inc])] = np.inf
            ratios[dec] = rd
            ratios[inc] = ru
            ratios = np.maximum(ratios, 0.0)

            own_range = self.hi[j] - self.lo[j]
            if not np.isfinite(own_range):
                own_range = np.inf
            t_basic = ratios.min() if m else np.inf
            t = min(t_basic, own_range)

            if not np.isfinite(t):
                if phase == 1:  # phase-1 objective is bounded below by zero
                    raise NumericalBreakdown("unbounded phase-1 subproblem")
                ray = np.zeros(self.W.shape[1])
                ray[j] = sigma
                ray[self.basis] = delta
                return LpOutcome(
                    status=UNBOUNDED,
                    witness=ray[: self.n].copy(),
                    iterations=self.iterations,
                )

            if t < PIVOT_TOL:
                degen += 1
            else:
                degen = 0 if degen <= bland_after else degen

            self.iterations += 1
            if own_range < t_basic - 1e-12:
                # bound flip: entering variable crosses its own box
                self.vals[self.basis] = xB + t * delta
                self.vals[j] = self.lo[j] if sigma < 0 else self.hi[j]
                self.status[j] = _AT_LOWER if sigma < 0 else _AT_UPPER
                continue

            tie = np.flatnonzero(np.isclose(ratios, t_basic, rtol=0.0, atol=1e-12))
            if tie.size == 0:
                tie = np.array([int(np.argmin(ratios))])
            r = int(tie[np.argmin(self.basis[tie])])
            if abs(alpha[r]) <= PIVOT_TOL:
                raise NumericalBreakdown("pivot element below tolerance")

            leaving = self.basis[r]
            self.vals[self.basis] = xB + t * delta
            self.vals[j] = self.vals[j] + sigma * t
            self.vals[leaving] = loB[r] if delta[r] < 0 else hiB[r]
            self.status[leaving] = _AT_LOWER if delta[r] < 0 else _AT_UPPER
            self.status[j] = _BASIC
            self.basis[r] = j

            piv = self.Binv[r] / alpha[r]
            self.Binv -= np.outer(alpha, piv)
            self.Binv[r] = piv
            since_refactor += 1
            if since_refactor >= 100:
                self._refactor()
                since_refactor = 0

    def _finish(self) -> LpOutcome:
        self._refactor()
        x = self.vals[: self.n].copy()
        lo, hi = self.p.lower, self.p.upper
        resid = self.p.rows @ x - self.p.row_upper
        primal_ok = (
            (resid.max(initial=-np.inf) <= FEAS_TOL * (1.0 + np.abs(self.p.row_upper).max(initial=0.0)))
            and np.all(x >= lo - 1e-7)
            and np.all(x <= hi + 1e-7)
        )
        if not primal_ok:
            raise NumericalBreakdown("final basis lost primal feasibility")
        y = self.cost[self.basis] @ self.Binv
        return LpOutcome(
            status=OPTIMAL,
            solution=x,
            objective_value=float(self.p.objective @ x),
            duals=y,
            iterations=self.iterations,
        )
