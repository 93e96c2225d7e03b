"""Partial-localization criticality.

A PL-ball bounds only the real-valued components of a point, leaving integer
components free; intersected with a mixed-integer linear set it is compact and
serves as a trust region.  The first-order measure

    psi(x, Delta) = max { <grad, x - w> : w in X, |w - x|_PL <= Delta }

is computed by one MILP solve; it is nonnegative, zero exactly at critical
points.  ``mila_solve`` wraps the measure in a trust-region descent loop.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    IterationLimit,
    NonpositiveRadius,
    NumericalBreakdown,
    SubproblemInfeasible,
    UnboundedBelowSuspected,
)
from .linprog import LpProblem
from .milp import INFEASIBLE_MILP, MilpProblem, solve_milp
from .model import MixedIntegerLinearSet, SmoothProgram

NEG_TOL = 1e-14


@dataclass(frozen=True)
class PlNorm:
    """Norm of the real-valued entries only: either max or sum of absolute
    values over components outside the integer index set."""

    kind: str
    integer_indices: tuple

    def __post_init__(self):
        if self.kind not in ("linf", "l1"):
            raise ValueError(f"unknown PL norm kind {self.kind!r}")
        object.__setattr__(
            self, "integer_indices", tuple(sorted(int(i) for i in set(self.integer_indices)))
        )

    def continuous_mask(self, n: int) -> np.ndarray:
        mask = np.ones(n, dtype=bool)
        mask[list(self.integer_indices)] = False
        return mask

    def value(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        sub = v[self.continuous_mask(v.size)]
        if sub.size == 0:
            return 0.0
        return float(np.abs(sub).max() if self.kind == "linf" else np.abs(sub).sum())


@dataclass
class PlBallRows:
    """Linear description of a PL-ball around a center.

    ``lower``/``upper`` are bound tightenings on the original variables;
    ``rows`` (if any) act on the original variables stacked with ``n_aux``
    auxiliary ones.
    """

    lower: np.ndarray
    upper: np.ndarray
    n_aux: int
    aux_lower: np.ndarray
    aux_upper: np.ndarray
    rows: np.ndarray
    row_upper: np.ndarray


def pl_ball_rows(norm: PlNorm, center, Delta: float) -> PlBallRows:
    """Constraint rows of {w : |w - center|_PL <= Delta}.

    Integer components are never constrained.  Infinite radius produces no
    constraints at all.  The sup-norm ball is pure bound tightenings; the
    1-norm ball introduces one auxiliary variable per real component.
    """
    if not Delta > 0:
        raise NonpositiveRadius(f"PL-ball radius must be positive, got {Delta}")
    center = np.asarray(center, dtype=float).ravel()
    n = center.size
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    empty = PlBallRows(lower, upper, 0, np.zeros(0), np.zeros(0), np.zeros((0, n)), np.zeros(0))
    if not np.isfinite(Delta):
        return empty
    mask = norm.continuous_mask(n)
    cont = np.flatnonzero(mask)
    if cont.size == 0:
        return empty
    lower[cont] = center[cont] - Delta
    upper[cont] = center[cont] + Delta
    if norm.kind == "linf":
        return PlBallRows(lower, upper, 0, np.zeros(0), np.zeros(0), np.zeros((0, n)), np.zeros(0))

    # l1: t_i >= |w_i - c_i| and sum t_i <= Delta
    k = cont.size
    rows = np.zeros((2 * k + 1, n + k))
    rhs = np.zeros(2 * k + 1)
    for a, i in enumerate(cont):
        rows[2 * a, i] = 1.0
        rows[2 * a, n + a] = -1.0
        rhs[2 * a] = center[i]
        rows[2 * a + 1, i] = -1.0
        rows[2 * a + 1, n + a] = -1.0
        rhs[2 * a + 1] = -center[i]
    rows[-1, n:] = 1.0
    rhs[-1] = Delta
    return PlBallRows(
        lower,
        upper,
        k,
        np.zeros(k),
        np.full(k, Delta),
        rows,
        rhs,
    )


@dataclass
class PsiResult:
    """Value and maximizer of the first-order measure at radius Delta.

    ``value`` is <grad, x - w> for the returned feasible maximizer;
    ``value_bound`` is the certified upper bound on the true maximum
    (value <= true psi <= value_bound), to be used for termination tests.
    """

    value: float
    maximizer: np.ndarray
    Delta: float
    value_bound: float
    nodes: int = 0


def _as_grad_and_set(target, x):
    if isinstance(target, SmoothProgram):
        return target.gradient(x), target.X
    g, X = target
    return np.asarray(g, dtype=float).ravel(), X


def psi(
    target,
    x,
    Delta: float,
    norm: PlNorm | None = None,
    node_limit: int = 10**6,
    backend: str = "auto",
    abs_gap: float = 1e-7,
    pin_integers: bool = False,
) -> PsiResult:
    """Evaluate the criticality measure by one MILP solve.

    ``target`` is either a SmoothProgram (gradient of its objective is used)
    or a pair (gradient vector, MixedIntegerLinearSet).  The center must lie
    in the set within 1e-6.  With ``pin_integers`` the integer components are
    frozen at the center, which lower-bounds the true measure and serves as a
    purely continuous step proposal.
    """
    x = np.asarray(x, dtype=float).ravel()
    g, X = _as_grad_and_set(target, x)
    if g.size != X.n or x.size != X.n:
        raise ValueError("gradient/center dimension differs from the set")
    if not X.contains(x, 1e-6):
        raise SubproblemInfeasible("psi center is not in the set within 1e-6")
    if norm is None:
        norm = PlNorm("linf", X.integer_indices)

    # tolerance-level clipping keeps the trust-region box nonempty when the
    # center sits within 1e-6 outside a bound
    center = np.clip(x, X.lower, X.upper)
    ball = pl_ball_rows(norm, center, Delta)
    lo = np.maximum(X.lower, ball.lower)
    hi = np.minimum(X.upper, ball.upper)
    if pin_integers and X.integer_indices:
        idx = list(X.integer_indices)
        pinned = np.round(center[idx])
        lo = lo.copy()
        hi = hi.copy()
        lo[idx] = pinned
        hi[idx] = pinned
    n = X.n
    if ball.n_aux:
        A = np.hstack([X.rows, np.zeros((X.m, ball.n_aux))])
        A = np.vstack([A, ball.rows])
        b = np.concatenate([X.row_upper, ball.row_upper])
        lo = np.concatenate([lo, ball.aux_lower])
        hi = np.concatenate([hi, ball.aux_upper])
        c = np.concatenate([g, np.zeros(ball.n_aux)])
    else:
        A, b, c = X.rows, X.row_upper, g

    ints = () if pin_integers else X.integer_indices
    prob = MilpProblem(LpProblem(c, A, b, lo, hi), ints)
    out = solve_milp(prob, node_limit=node_limit, abs_gap=abs_gap, backend=backend)
    if out.status == INFEASIBLE_MILP:
        raise SubproblemInfeasible(
            "PL trust-region subproblem infeasible although the center is feasible"
        )
    w = out.solution[:n]
    gx = float(g @ x)
    value = gx - float(g @ w)
    bound = gx - out.objective_bound
    scale = 1.0 + abs(gx)
    if value < -max(NEG_TOL, 1e-10 * scale):
        raise NumericalBreakdown(f"criticality measure came out negative: {value}")
    value = max(value, 0.0)
    bound = max(bound, value)
    return PsiResult(value=value, maximizer=w, Delta=float(Delta), value_bound=bound, nodes=out.nodes_explored)


def make_continuous_polish(
    X: MixedIntegerLinearSet,
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    nonlinear_factory=None,
    maxiter: int = 120,
    gtol: float = 1e-9,
    xtol: float = 1e-12,
):
    """Pattern-fixed continuous refinement: minimize the objective over the
    continuous variables with integers frozen, honoring the polyhedral rows
    and bounds (plus optional caller-built nonlinear constraints).

    Returns a callable suitable for MilaConfig.continuous_polish, or None
    when there are no continuous variables.  Non-finite objective values are
    capped so barrier-type objectives retreat instead of exploding.
    """
    from scipy.optimize import Bounds as _Bounds
    from scipy.optimize import LinearConstraint as _LinCon
    from scipy.optimize import minimize as _minimize

    ints = list(X.integer_indices)
    cont = np.setdiff1d(np.arange(X.n), np.array(ints, dtype=int))
    if cont.size == 0:
        return None
    A_c = X.rows[:, cont] if X.m else None
    A_i = X.rows[:, ints] if (X.m and ints) else None

    def polish(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).copy()
        if ints:
            x[ints] = np.round(x[ints])

        def compose(xc):
            full = x.copy()
            full[cont] = xc
            return full

        def f_c(xc):
            v = fun(compose(xc))
            return float(v) if np.isfinite(v) else 1e18

        def g_c(xc):
            try:
                g = grad(compose(xc))[cont]
            except Exception:
                return np.zeros(cont.size)
            return np.where(np.isfinite(g), g, 0.0)

        cons = []
        if X.m:
            ub = X.row_upper - (A_i @ x[ints] if ints else 0.0)
            cons.append(_LinCon(A_c, -np.inf, ub))
        if nonlinear_factory is not None:
            cons.extend(nonlinear_factory(compose, cont))
        if cons:
            res = _minimize(
                f_c,
                x[cont],
                jac=g_c,
                method="trust-constr",
                bounds=_Bounds(X.lower[cont], X.upper[cont]),
                constraints=cons,
                options={"maxiter": maxiter, "gtol": gtol, "xtol": xtol, "verbose": 0},
            )
        else:
            res = _minimize(
                f_c,
                x[cont],
                jac=g_c,
                method="L-BFGS-B",
                bounds=list(zip(X.lower[cont], X.upper[cont])),
                options={"maxiter": 4 * maxiter, "ftol": 1e-14, "gtol": 1e-11},
            )
        return compose(np.asarray(res.x, dtype=float))

    return polish


# ---------------------------------------------------------------------------
# MILA: trust-region mixed-integer linearization descent
# ---------------------------------------------------------------------------


@dataclass
class MilaConfig:
    delta0: float = 1.0
    delta_max: float = 1e6
    delta_min: float = 1e-10
    accept_ratio: float = 0.1
    # every accepted step grows the radius; the follow-up rejection it often
    # buys is the price of tracking the productive scale from above
    expand_ratio: float = 0.1
    expand: float = 2.0
    shrink: float = 0.5
    max_iter: int = 10_000
    objective_floor: float = -1e20
    node_limit: int = 10**6
    backend: str = "auto"
    abs_gap: float = 1e-7
    # smallest radius at which criticality certificates are accepted without
    # a confirmation solve; None means min(delta0, 1).  Radii below it trigger
    # one measure evaluation at the certification radius, whose maximizer is
    # tried as an escape step before the certificate is trusted.
    cert_radius: float | None = None
    # rejected steps that flip integers get their continuous part descended
    # within the flipped pattern for up to this many extra measure solves
    # (integer moves often need compensation the linear model cannot see)
    trial_polish: int = 6
    # exploration ascents may overshoot the certification radius up to this
    # ceiling before giving up on restructuring steps
    explore_ceiling: float = 256.0
    # optional caller-supplied continuous refinement: maps a feasible point
    # to a feasible point with the same integer pattern and no worse
    # objective (typically an NLP solve over the continuous variables);
    # invoked at entry and after accepted steps
    continuous_polish: Callable[[np.ndarray], np.ndarray] | None = None
    # optional hook on (current point, trial point): trials rejected by the
    # filter shrink the radius (used by the interior-point loop to keep steps
    # away from the barrier boundary)
    trial_filter: Callable[[np.ndarray, np.ndarray], bool] | None = None


@dataclass
class MilaResult:
    x: np.ndarray
    epsilon: float
    Delta: float
    iterations: int
    objective_trace: list
    psi_value: float
    psi_bound: float
    nodes_total: int = 0
    hit_delta_min: bool = False


def mila_solve(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    X: MixedIntegerLinearSet,
    x0,
    epsilon: float,
    norm: PlNorm | None = None,
    cfg: MilaConfig | None = None,
) -> MilaResult:
    """Drive the objective down to an epsilon-Delta-critical point.

    Each iteration solves the trust-region MILP for the linear model, then
    compares actual to predicted decrease; the radius doubles on accepted
    steps and halves otherwise.  The returned point carries the radius that
    witnessed criticality, and the objective trace is nonincreasing.
    """
    cfg = cfg or MilaConfig()
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(x0, dtype=float).ravel()
    if not X.contains(x, 1e-6):
        raise ValueError("mila_solve start point is not in the set within 1e-6")
    if norm is None:
        norm = PlNorm("linf", X.integer_indices)

    Delta = cfg.delta0
    base_cert = cfg.cert_radius if cfg.cert_radius is not None else min(cfg.delta0, 1.0)
    fx = float(fun(x))
    trace = [fx]
    nodes = 0
    trials = 0
    solves = 0

    int_idx = list(X.integer_indices)

    def _measure(radius, pin=False):
        nonlocal nodes, solves
        solves += 1
        r = psi(
            (grad(x), X), x, radius, norm,
            node_limit=cfg.node_limit, backend=cfg.backend, abs_gap=cfg.abs_gap,
            pin_integers=pin,
        )
        nodes += r.nodes
        return r

    def _flips_integers(w) -> bool:
        if not int_idx:
            return False
        return bool(np.any(np.abs(w[int_idx] - np.round(x[int_idx])) > 0.5))

    # integer patterns whose polish already failed at the current point;
    # cleared whenever the point moves
    failed_patterns: set = set()

    def _pattern(w) -> bytes:
        return np.round(w[int_idx]).astype(np.int64).tobytes()

    def _polish_trial(r):
        """Re-optimize the continuous variables inside the trial's integer
        pattern, then accept any meaningful decrease: the linear model
        routinely overpredicts flip gains, so the plain ratio test would
        reject genuinely improving patterns."""
        nonlocal nodes, solves, x, fx, trials
        w = r.maximizer
        pat = _pattern(w)
        if pat in failed_patterns:
            return None
        base = None
        if cfg.continuous_polish is not None:
            # start the pattern re-optimization from the current continuous
            # values (the trial's own continuous part is a greedy vertex,
            # often far from the pattern's optimum); fall back to the vertex
            blend = x.copy()
            blend[int_idx] = np.round(w[int_idx])
            for start in (blend, w):
                try:
                    cand = np.asarray(cfg.continuous_polish(start), dtype=float).ravel()
                except Exception:
                    continue
                if (
                    cand.shape == w.shape
                    and np.all(np.isfinite(cand))
                    and X.contains(cand, 1e-6)
                    and (cfg.trial_filter is None or cfg.trial_filter(x, cand))
                ):
                    fc = float(fun(cand))
                    if np.isfinite(fc) and (base is None or fc < fbase):
                        base, fbase = cand, fc
                if base is not None and fbase < fx:
                    break
        if base is None:
            # fall back to a few pinned trust-region steps from the trial
            fw = float(fun(w))
            if not np.isfinite(fw):
                return None
            base, fbase = w, fw
            D = Delta
            for _ in range(cfg.trial_polish):
                if solves >= cfg.max_iter:
                    break
                solves += 1
                try:
                    rp = psi(
                        (grad(base), X), base, D, norm,
                        node_limit=cfg.node_limit, backend=cfg.backend,
                        abs_gap=cfg.abs_gap, pin_integers=True,
                    )
                except SubproblemInfeasible:
                    break
                nodes += rp.nodes
                if rp.value <= 1e-15:
                    break
                wc = rp.maximizer
                fc = float(fun(wc))
                if np.isfinite(fc) and fc < fbase:
                    if cfg.trial_filter is not None and not cfg.trial_filter(base, wc):
                        D *= cfg.shrink
                        continue
                    base, fbase = wc, fc
                else:
                    D *= cfg.shrink
        decrease = fx - fbase
        if decrease <= 1e-10 * (1.0 + abs(fx)):
            failed_patterns.add(pat)
            return None
        trials += 1
        x, fx = base, fbase
        trace.append(fx)
        failed_patterns.clear()
        return decrease / r.value

    def _try_step(r):
        """Ratio test against the linear model; returns the achieved ratio
        when the step is accepted (x moved), None otherwise."""
        nonlocal x, fx, trials
        trials += 1
        w = r.maximizer
        if r.value <= 1e-15:
            return None
        if cfg.trial_filter is not None and not cfg.trial_filter(x, w):
            return None
        fw = float(fun(w))
        if not np.isfinite(fw):
            return None
        ratio = (fx - fw) / r.value
        if ratio < cfg.accept_ratio:
            return None
        x, fx = w, fw
        trace.append(fx)
        if fx < cfg.objective_floor:
            raise UnboundedBelowSuspected(
                f"objective {fx} fell below the floor {cfg.objective_floor}"
            )
        return ratio

    def _result(r, hit=False):
        return MilaResult(
            x=x, epsilon=epsilon, Delta=r.Delta, iterations=trials,
            objective_trace=trace, psi_value=r.value, psi_bound=r.value_bound,
            nodes_total=nodes, hit_delta_min=hit,
        )

    polished_pattern = [None]

    def _refine():
        """Apply the caller's continuous polish; keep only feasible
        improvements with the same integer pattern.  At most one polish per
        integer pattern visited."""
        nonlocal x, fx
        if cfg.continuous_polish is None:
            return
        pat = _pattern(x) if int_idx else b""
        if pat == polished_pattern[0]:
            return
        polished_pattern[0] = pat
        try:
            cand = np.asarray(cfg.continuous_polish(x), dtype=float).ravel()
        except Exception:
            return
        if cand.shape != x.shape or not np.all(np.isfinite(cand)):
            return
        if int_idx and np.any(np.abs(cand[int_idx] - np.round(x[int_idx])) > 1e-9):
            return
        if not X.contains(cand, 1e-6):
            return
        if cfg.trial_filter is not None and not cfg.trial_filter(x, cand):
            return
        fc = float(fun(cand))
        if np.isfinite(fc) and fc < fx:
            x, fx = cand, fc
            trace.append(fx)

    _refine()

    import os
    _dbg = bool(os.environ.get("MILAGR_DEBUG_MILA"))

    # certificates are trusted at the certification radius or above; smaller
    # radii with the measure below tolerance start an exploration ascent
    # (one doubling per solve).  With a continuous polish installed, plain
    # rejected trials also trigger ascent, because the continuous directions
    # are already optimal and only integer restructurings at larger radii
    # can help.  The ascent ends at an accepted step or at the top.
    ascending = False
    last_cert = None
    while solves < cfg.max_iter:
        res = _measure(Delta)
        if _dbg and solves < 160:
            print(
                f"    [mila {solves}] D={Delta:.2e} psi={res.value:.3e} "
                f"eps={epsilon:.1e} cert={base_cert:g} up={ascending} "
                f"flips={_flips_integers(res.maximizer)} fx={fx:.6f}",
                flush=True,
            )
        if res.value_bound <= epsilon:
            last_cert = res
            if Delta >= base_cert:
                return _result(res)
            Delta = min(2.0 * Delta, base_cert)
            ascending = True
            continue

        ratio = _try_step(res)
        if ratio is not None:
            failed_patterns.clear()
        if ratio is None and _flips_integers(res.maximizer):
            # integer flips drag coupled continuous variables through the
            # linear rows; give the flipped pattern a continuous polish, and
            # failing that retry the radius with the integers frozen
            ratio = _polish_trial(res)
            if ratio is None:
                pinned = _measure(Delta, pin=True)
                if pinned.value > 1e-15:
                    ratio = _try_step(pinned)
        if ratio is not None:
            ascending = False
            _refine()
            if ratio >= cfg.expand_ratio:
                Delta = min(Delta * cfg.expand, cfg.delta_max)
            continue

        exhausted = cfg.continuous_polish is not None and not _flips_integers(res.maximizer)
        if ascending or exhausted:
            ceiling = max(base_cert, cfg.explore_ceiling)
            if Delta >= ceiling:
                warnings.warn(
                    "exploration reached its ceiling without an acceptable "
                    "step; returning the best certificate seen",
                    RuntimeWarning,
                    stacklevel=2,
                )
                return _result(last_cert if last_cert is not None else res, hit=True)
            Delta = min(2.0 * Delta, ceiling)
            ascending = True
        else:
            Delta *= cfg.shrink
            if Delta < cfg.delta_min:
                warnings.warn(
                    "trust region collapsed below delta_min with measure above "
                    "tolerance; declaring criticality at the current radius",
                    RuntimeWarning,
                    stacklevel=2,
                )
                return _result(res, hit=True)
    raise IterationLimit(f"mila_solve exceeded {cfg.max_iter} measure evaluations")
