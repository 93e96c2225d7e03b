"""Safeguarded augmented Lagrangian outer loop.

The augmented Lagrangian

    L_mu(x, y) = f(x) + dist_C(c(x) + mu y)^2 / (2 mu) - mu |y|^2 / 2

is minimized over the mixed-integer linear set to approximate criticality by
the MILA subsolver; multipliers are updated through the shifted projection so
that the gradient identity  grad_x L_mu(x, yhat) = grad_x L(x, y)  holds
exactly, and the penalty parameter shrinks only while feasibility stalls.
Multiplier estimates are drawn from a bounded safeguarding box (clamped to
the sign structure the target set admits), which keeps mu*yhat -> 0 whenever
mu -> 0.

Every outer iteration re-checks the iterate identities (set membership,
normal-cone membership, gradient identity, criticality bound); violations are
counted on the trace and should always be zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import trace as _trace
from .criticality import MilaConfig, PlNorm, make_continuous_polish, mila_solve, psi
from .errors import DimensionMismatch, MilagrError
from .model import ConvexTarget, NonpositiveOrthant, SmoothProgram, ZeroSet, grad_x_lagrangian, in_normal_cone
from .trace import SolveTrace


@dataclass
class AugLagParams:
    mu0: float = 0.1
    eps0: float = 0.1
    kappa_mu: float = 0.5
    theta_mu: float = 0.9
    kappa_eps: float = 0.5
    eps_final: float = 1e-6
    y_max: float = 1e20
    max_outer: int = 100
    mu_stall: float = 1e-12
    # when feasibility progress stalls, the certification ball of the next
    # subproblem widens (x4, capped here; None derives the cap from the
    # variable boxes) so the subsolver can see restructuring steps a unit
    # ball hides; it decays back while progress resumes
    explore_radius: float | None = None

    def __post_init__(self):
        for name in ("kappa_mu", "theta_mu", "kappa_eps"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.mu0 <= 0 or self.eps0 <= 0:
            raise ValueError("mu0 and eps0 must be positive")


@dataclass
class AlmIterate:
    x: np.ndarray
    y_hat: np.ndarray
    z: np.ndarray
    v: np.ndarray
    y: np.ndarray
    mu: float
    eps: float
    Delta: float
    psi_value: float = float("nan")
    psi_bound: float = float("nan")


# ---------------------------------------------------------------------------
# augmented Lagrangian function and derivatives
# ---------------------------------------------------------------------------


def _shift(P: SmoothProgram, x, y, mu: float):
    cx = P.constraint(x)
    if y.size != P.m:
        raise DimensionMismatch(f"multiplier has length {y.size}, expected {P.m}")
    return cx, cx + mu * y


def aug_lagrangian(P: SmoothProgram, x, y, mu: float) -> float:
    """L_mu(x, y); requires mu > 0."""
    if mu <= 0:
        raise ValueError("penalty parameter must be positive")
    y = np.asarray(y, dtype=float).ravel()
    cx, shifted = _shift(P, x, y, mu)
    d = P.C.distance(shifted)
    return P.objective(x) + d * d / (2.0 * mu) - 0.5 * mu * float(y @ y)


def s_mu(P: SmoothProgram, x, y, mu: float) -> np.ndarray:
    """Projection of the shifted constraint, proj_C(c(x) + mu y)."""
    y = np.asarray(y, dtype=float).ravel()
    _, shifted = _shift(P, x, y, mu)
    return P.C.project(shifted)


def y_mu(P: SmoothProgram, x, y, mu: float) -> np.ndarray:
    """First-order multiplier estimate y + (c(x) - s_mu)/mu."""
    y = np.asarray(y, dtype=float).ravel()
    cx, shifted = _shift(P, x, y, mu)
    return y + (cx - P.C.project(shifted)) / mu


def aug_lagrangian_grad_x(P: SmoothProgram, x, y, mu: float) -> np.ndarray:
    """grad_x L_mu = grad f + Jc' * y_mu(x, y)."""
    if mu <= 0:
        raise ValueError("penalty parameter must be positive")
    g = P.gradient(x)
    if P.m == 0:
        return g
    return g + P.jacobian(x).T @ y_mu(P, x, y, mu)


# ---------------------------------------------------------------------------
# safeguarding and certificates
# ---------------------------------------------------------------------------


def safeguard_bounds(C: ConvexTarget, y_max: float):
    """Componentwise bounds of the dual safeguarding box: zero-target rows
    admit multipliers of any sign, nonpositive-orthant rows only nonnegative
    ones, boxes any sign."""
    lo = np.empty(C.dim)
    hi = np.empty(C.dim)
    for blk, s in C.slices():
        hi[s] = y_max
        lo[s] = 0.0 if isinstance(blk, NonpositiveOrthant) else -y_max
    return lo, hi


def clamp_multiplier(C: ConvexTarget, y, y_max: float) -> np.ndarray:
    lo, hi = safeguard_bounds(C, y_max)
    return np.clip(np.asarray(y, dtype=float).ravel(), lo, hi)


def default_explore_radius(P: SmoothProgram) -> float:
    """Width of the early certification ball: the median finite box span of
    the continuous variables (at least 1, capped at 100), a scale at which
    typical restructuring steps are visible without making every subproblem
    a global solve."""
    mask = np.ones(P.n, dtype=bool)
    mask[list(P.X.integer_indices)] = False
    span = P.X.upper[mask] - P.X.lower[mask]
    span = span[np.isfinite(span)]
    mid = float(np.median(span)) if span.size else 1.0
    return float(np.clip(mid, 1.0, 100.0))


def check_kkt(
    P: SmoothProgram,
    x,
    y,
    z,
    eps: float,
    Delta: float,
    norm: PlNorm | None = None,
    normal_cone_tol: float | None = None,
    backend: str = "auto",
) -> bool:
    """Approximate KKT certificate: x in X, criticality of the Lagrangian at
    radius Delta below eps, y normal to C at z, and |c(x) - z| <= eps."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if not P.X.contains(x, 1e-6):
        return False
    if P.m:
        tol = eps if normal_cone_tol is None else normal_cone_tol
        if not in_normal_cone(P.C, z, y, tol):
            return False
        if float(np.linalg.norm(P.constraint(x) - z)) > eps:
            return False
    g = grad_x_lagrangian(P, x, y)
    res = psi((g, P.X), x, Delta, norm, backend=backend)
    return res.value_bound <= eps


def feasibility_criticality(
    P: SmoothProgram, x, Delta: float, norm: PlNorm | None = None, backend: str = "auto"
) -> float:
    """Criticality measure of the squared-distance feasibility objective
    F(x) = dist_C(c(x))^2 / 2 at x over the set."""
    cx = P.constraint(x)
    gF = P.jacobian(x).T @ (cx - P.C.project(cx)) if P.m else np.zeros(P.n)
    return psi((gF, P.X), x, Delta, norm, backend=backend).value


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------


def alm_solve(
    P: SmoothProgram,
    params: AugLagParams | None = None,
    x0=None,
    y0=None,
    norm: PlNorm | None = None,
    mila_cfg: MilaConfig | None = None,
    on_iterate=None,
) -> SolveTrace:
    """Run the safeguarded augmented Lagrangian method from x0.

    Returns a trace whose status is eps_kkt on success; infeasible_stall when
    the penalty collapsed without feasibility progress (the final point is
    then checked for criticality of the feasibility problem); max_outer or
    subsolver_failure otherwise.
    """
    params = params or AugLagParams()
    if x0 is None:
        raise ValueError("alm_solve needs a start point in the set")
    x = np.asarray(x0, dtype=float).ravel()
    if not P.X.contains(x, 1e-6):
        raise ValueError("start point is not in the mixed-integer set within 1e-6")
    y_prev = np.zeros(P.m) if y0 is None else np.asarray(y0, dtype=float).ravel()
    if y_prev.size != P.m:
        raise DimensionMismatch("y0 has wrong length")
    if norm is None:
        norm = PlNorm("linf", P.X.integer_indices)
    mila_cfg = mila_cfg or MilaConfig()

    tr = SolveTrace(solver="alm")
    mu, eps = params.mu0, params.eps0
    eta = params.eps_final
    viol_prev = np.inf
    t_start = time.perf_counter()
    cert_base = (
        mila_cfg.cert_radius
        if mila_cfg.cert_radius is not None
        else min(mila_cfg.delta0, 1.0)
    )
    explore = (
        params.explore_radius
        if params.explore_radius is not None
        else default_explore_radius(P)
    )
    warm_delta = mila_cfg.delta0
    cert_j = cert_base
    last_restore = -10

    # far-from-feasible starts first descend the squared-distance residual:
    # that surrogate has no 1/mu stiffness, so it reaches the near-feasible
    # region in a fraction of the subproblem cost
    if P.m and P.C.distance(P.constraint(x)) > 1.0:
        x = _feasibility_descent(P, x, norm, mila_cfg)

    for j in range(params.max_outer):
        y_hat = clamp_multiplier(P.C, y_prev, params.y_max)

        def fun(xx, _y=y_hat, _mu=mu):
            return aug_lagrangian(P, xx, _y, _mu)

        def grad(xx, _y=y_hat, _mu=mu):
            return aug_lagrangian_grad_x(P, xx, _y, _mu)

        cfg_j = replace(
            mila_cfg,
            delta0=max(warm_delta, cert_j),
            cert_radius=cert_j,
            continuous_polish=make_continuous_polish(P.X, fun, grad),
        )
        try:
            sub = mila_solve(fun, grad, P.X, x, eps, norm, cfg_j)
        except MilagrError as exc:
            tr.status = _trace.SUBSOLVER_FAILURE
            tr.rows.append({"j": j, "error": str(exc)})
            tr.wall_time = time.perf_counter() - t_start
            return tr
        x = sub.x
        warm_delta = float(np.clip(sub.Delta * 4.0, 1e-8, mila_cfg.delta0))
        cx = P.constraint(x)
        z = P.C.project(cx + mu * y_hat) if P.m else np.zeros(0)
        v = cx - z
        y = y_hat + v / mu
        y_prev = y
        viol = float(np.linalg.norm(v))

        bad = _lemma_violations(P, x, z, y, y_hat, mu, sub.psi_bound, eps)
        tr.lemma_violations += bad
        it = AlmIterate(
            x=x, y_hat=y_hat, z=z, v=v, y=y, mu=mu, eps=eps,
            Delta=sub.Delta, psi_value=sub.psi_value, psi_bound=sub.psi_bound,
        )
        now = time.perf_counter() - t_start
        row = {
            "j": j,
            "mu": mu,
            "eps": eps,
            "psi": sub.psi_value,
            "viol": viol,
            "objective": P.objective(x),
            "inner_iterations": sub.iterations,
            "nodes": sub.nodes_total,
            "wall_time": now,
        }
        tr.add(it, row)
        tr.nodes_total += sub.nodes_total
        if on_iterate is not None:
            on_iterate(it)

        if sub.psi_bound <= params.eps_final and viol <= params.eps_final:
            tr.status = _trace.EPS_KKT
            tr.kkt_ok = check_kkt(
                P, x, y, z, params.eps_final, sub.Delta, norm, backend=mila_cfg.backend
            )
            break

        if j > 0 and viol > max(eta, params.theta_mu * viol_prev):
            mu = params.kappa_mu * mu
            cert_j = min(cert_j * 4.0, max(explore, cert_base))
            # restoration: when feasibility stalls well away from the target,
            # descend the raw squared-distance residual before continuing
            # (integer-pattern moves that the penalty weighting rejects are
            # often exactly what feasibility needs)
            if viol > 100 * params.eps_final and j >= last_restore + 2:
                x = _feasibility_descent(P, x, norm, mila_cfg)
                last_restore = j
        else:
            cert_j = max(cert_base, cert_j * 0.5)
        viol_prev = viol

        if mu < params.mu_stall and viol > params.eps_final:
            tr.status = _trace.INFEASIBLE_STALL
            tr.feasibility_criticality_value = feasibility_criticality(
                P, x, max(sub.Delta, 1e-3), norm, backend=mila_cfg.backend
            )
            break

        eps = max(params.eps_final, params.kappa_eps * eps)
    else:
        tr.status = _trace.MAX_OUTER

    tr.x, tr.y, tr.z = x, (y if P.m else np.zeros(0)), (z if P.m else np.zeros(0))
    tr.Delta = sub.Delta
    tr.objective = P.objective(x)
    tr.psi_value = sub.psi_value
    tr.constraint_violation = viol
    tr.wall_time = time.perf_counter() - t_start
    return tr


def _feasibility_descent(P: SmoothProgram, x, norm, mila_cfg: MilaConfig, tol: float = 1e-4):
    """Best-effort descent of F(x) = dist_C(c(x))^2 / 2 over the set."""

    def fun(xx):
        return 0.5 * P.C.distance(P.constraint(xx)) ** 2

    def grad(xx):
        cx = P.constraint(xx)
        return P.jacobian(xx).T @ (cx - P.C.project(cx))

    try:
        cfg = replace(
            mila_cfg,
            trial_filter=None,
            continuous_polish=make_continuous_polish(P.X, fun, grad),
        )
        res = mila_solve(fun, grad, P.X, x, tol, norm, cfg)
        return res.x
    except MilagrError:
        return x


def _lemma_violations(P, x, z, y, y_hat, mu, psi_bound, eps) -> int:
    """Count failures of the per-iteration identities (should be zero)."""
    bad = 0
    if not P.X.contains(x, 1e-6):
        bad += 1
    if P.m:
        if P.C.distance(z) > 1e-9:
            bad += 1
        if not in_normal_cone(P.C, z, y, 1e-8):
            bad += 1
        g_pen = aug_lagrangian_grad_x(P, x, y_hat, mu)
        g_lag = grad_x_lagrangian(P, x, y)
        den = 1.0 + float(np.linalg.norm(g_lag))
        if float(np.linalg.norm(g_pen - g_lag)) > 1e-10 * den:
            bad += 1
    if not psi_bound <= eps * (1 + 1e-12):
        bad += 1
    return bad
