"""Interior-point outer loop with a logarithmic barrier.

Inequality rows of the target (nonpositive orthant blocks, convention
c_i(x) <= 0) enter the subproblem as -mu * log(-c_i(x)); equality rows (zero
blocks) keep the shifted-penalty treatment of the augmented Lagrangian with
the same mu.  Dual estimates follow the barrier derivative, y_i = -mu/c_i, so
that y_i * c_i = -mu exactly at every iterate, and the barrier parameter
follows the exact geometric schedule mu_j = mu0 * kappa_mu^j.

Strict feasibility of the barrier rows is maintained throughout: candidate
trust-region steps that would eat more than the fraction-to-boundary share of
the current slack are rejected inside the subsolver, shrinking the radius.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import trace as _trace
from .alm import check_kkt, clamp_multiplier, default_explore_radius
from .criticality import MilaConfig, PlNorm, make_continuous_polish, mila_solve
from .errors import BoundaryViolation, ConfigError, MilagrError
from .model import Box, NonpositiveOrthant, SmoothProgram, ZeroSet
from .trace import SolveTrace


@dataclass
class BarrierParams:
    mu0: float = 0.1
    kappa_mu: float = 0.5
    eps0: float = 0.1
    kappa_eps: float = 0.5
    eps_final: float = 1e-6
    fraction_to_boundary: float = 0.99
    y_max: float = 1e20
    max_outer: int = 80
    theta_eq: float = 0.9
    # see AugLagParams.explore_radius
    explore_radius: float | None = None

    def __post_init__(self):
        if not 0 < self.kappa_mu < 1:
            raise ValueError("kappa_mu must lie in (0, 1)")
        if not 0 < self.fraction_to_boundary < 1:
            raise ValueError("fraction_to_boundary must lie in (0, 1)")


@dataclass
class BarrierIterate:
    x: np.ndarray
    y: np.ndarray
    mu: float
    eps: float
    Delta: float
    min_slack: float = float("nan")


def _row_masks(P: SmoothProgram):
    """Boolean masks of equality rows and barrier (inequality) rows."""
    eq = np.zeros(P.m, dtype=bool)
    ineq = np.zeros(P.m, dtype=bool)
    for blk, s in P.C.slices():
        if isinstance(blk, ZeroSet):
            eq[s] = True
        elif isinstance(blk, NonpositiveOrthant):
            ineq[s] = True
        elif isinstance(blk, Box):
            raise ConfigError(
                "the interior-point loop handles zero and nonpositive-orthant "
                "blocks only; box blocks are not supported"
            )
    return eq, ineq


def barrier_value(P: SmoothProgram, x, mu: float) -> float:
    """f(x) - mu * sum(log(-c_i(x))) over the inequality rows.

    Raises BoundaryViolation when some barrier row is at or beyond zero.
    """
    if mu <= 0:
        raise ValueError("barrier parameter must be positive")
    _, ineq = _row_masks(P)
    ci = P.constraint(x)[ineq]
    if ci.size and ci.max() >= 0:
        raise BoundaryViolation(f"barrier row at value {ci.max()} >= 0")
    return P.objective(x) - mu * float(np.sum(np.log(-ci))) if ci.size else P.objective(x)


def barrier_grad(P: SmoothProgram, x, mu: float) -> np.ndarray:
    """Gradient of the barrier composite, grad f + sum_i (-mu/c_i) grad c_i."""
    if mu <= 0:
        raise ValueError("barrier parameter must be positive")
    _, ineq = _row_masks(P)
    g = P.gradient(x)
    ci = P.constraint(x)[ineq]
    if ci.size == 0:
        return g
    if ci.max() >= 0:
        raise BoundaryViolation(f"barrier row at value {ci.max()} >= 0")
    J = P.jacobian(x)[ineq]
    return g + J.T @ (-mu / ci)


def ip_solve(
    P: SmoothProgram,
    params: BarrierParams | None = None,
    x0=None,
    y0=None,
    norm: PlNorm | None = None,
    mila_cfg: MilaConfig | None = None,
    on_iterate=None,
) -> SolveTrace:
    """Run the interior-point method from a strictly feasible start.

    Every accepted iterate keeps all barrier rows strictly negative; equality
    rows are driven to eps_final through the augmented Lagrangian mechanism
    sharing the same mu.  Terminates on the approximate-KKT check with
    complementarity residual |y_i c_i| <= eps_final.
    """
    params = params or BarrierParams()
    if x0 is None:
        raise ValueError("ip_solve needs a start point")
    x = np.asarray(x0, dtype=float).ravel()
    if not P.X.contains(x, 1e-6):
        raise ValueError("start point is not in the mixed-integer set within 1e-6")
    eq, ineq = _row_masks(P)
    c0 = P.constraint(x)
    if ineq.any() and c0[ineq].max() >= 0:
        raise BoundaryViolation(
            "interior-point start must be strictly feasible on inequality rows"
        )
    if norm is None:
        norm = PlNorm("linf", P.X.integer_indices)
    mila_cfg = mila_cfg or MilaConfig()
    keep = 1.0 - params.fraction_to_boundary

    y_hat_eq = np.zeros(int(eq.sum()))
    if y0 is not None:
        y_hat_eq = np.asarray(y0, dtype=float).ravel()[eq]
    tr = SolveTrace(solver="ip")
    mu, eps = params.mu0, params.eps0
    t_start = time.perf_counter()
    sub = None
    viol = np.inf
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
    viol_prev = np.inf

    for j in range(params.max_outer):

        def fun(xx, _y=y_hat_eq, _mu=mu):
            c = P.constraint(xx)
            ci = c[ineq]
            if ci.size and ci.max() >= 0:
                return np.inf
            val = P.objective(xx)
            if ci.size:
                val -= _mu * float(np.sum(np.log(-ci)))
            ce = c[eq]
            if ce.size:
                sh = ce + _mu * _y
                val += float(sh @ sh) / (2 * _mu) - 0.5 * _mu * float(_y @ _y)
            return val

        def grad(xx, _y=y_hat_eq, _mu=mu):
            c = P.constraint(xx)
            J = P.jacobian(xx)
            g = P.gradient(xx)
            ci = c[ineq]
            if ci.size:
                g = g + J[ineq].T @ (-_mu / ci)
            ce = c[eq]
            if ce.size:
                g = g + J[eq].T @ (_y + ce / _mu)
            return g

        def filt(xc, w):
            cw = P.constraint(w)[ineq]
            cx = P.constraint(xc)[ineq]
            if cw.size == 0:
                return True
            return bool(np.all(cw <= keep * cx))

        # the polish sees a C1 quadratic extension of the barrier beyond a
        # small slack threshold, so line searches crossing the boundary get
        # consistent uphill values and gradients; polished points are
        # re-checked against the true barrier before acceptance
        ci_now = P.constraint(x)[ineq]
        d_ext = max(1e-12, 0.01 * float(-ci_now.max())) if ci_now.size else 1.0

        def ext_val(t, _d=d_ext):
            t = np.asarray(t, dtype=float)
            inside = t <= -_d
            u = (t + _d) / _d
            return np.where(inside, -np.log(np.where(inside, -t, 1.0)), -np.log(_d) + u + 0.5 * u * u)

        def ext_deriv(t, _d=d_ext):
            t = np.asarray(t, dtype=float)
            inside = t <= -_d
            return np.where(inside, -1.0 / np.where(inside, t, -1.0), (1.0 + (t + _d) / _d) / _d)

        def polish_fun(xx, _y=y_hat_eq, _mu=mu):
            c = P.constraint(xx)
            val = P.objective(xx)
            ci = c[ineq]
            if ci.size:
                val += _mu * float(np.sum(ext_val(ci)))
            ce = c[eq]
            if ce.size:
                sh = ce + _mu * _y
                val += float(sh @ sh) / (2 * _mu) - 0.5 * _mu * float(_y @ _y)
            return val

        def polish_grad(xx, _y=y_hat_eq, _mu=mu):
            c = P.constraint(xx)
            J = P.jacobian(xx)
            g = P.gradient(xx)
            ci = c[ineq]
            if ci.size:
                g = g + J[ineq].T @ (_mu * ext_deriv(ci))
            ce = c[eq]
            if ce.size:
                g = g + J[eq].T @ (_y + ce / _mu)
            return g

        cfg = replace(
            mila_cfg,
            trial_filter=filt if ineq.any() else None,
            delta0=max(warm_delta, cert_j),
            cert_radius=cert_j,
            continuous_polish=make_continuous_polish(P.X, polish_fun, polish_grad),
        )
        try:
            sub = mila_solve(fun, grad, P.X, x, eps, norm, cfg)
        except MilagrError as exc:
            tr.status = _trace.SUBSOLVER_FAILURE
            tr.rows.append({"j": j, "error": str(exc)})
            tr.wall_time = time.perf_counter() - t_start
            return tr
        x = sub.x
        warm_delta = float(np.clip(sub.Delta * 4.0, 1e-8, mila_cfg.delta0))
        c = P.constraint(x)
        ci, ce = c[ineq], c[eq]
        min_slack = float(-ci.max()) if ci.size else np.inf

        y = np.zeros(P.m)
        if ci.size:
            y[ineq] = -mu / ci
        y_eq = y_hat_eq + ce / mu if ce.size else y_hat_eq
        y[eq] = y_eq
        comp = float(np.max(np.abs(y[ineq] * ci))) if ci.size else 0.0
        viol = float(np.linalg.norm(ce)) if ce.size else 0.0

        it = BarrierIterate(x=x, y=y, mu=mu, eps=eps, Delta=sub.Delta, min_slack=min_slack)
        now = time.perf_counter() - t_start
        row = {
            "j": j,
            "mu": mu,
            "eps": eps,
            "psi": sub.psi_value,
            "complementarity": comp,
            "viol": viol,
            "objective": P.objective(x),
            "min_slack": min_slack,
            "inner_iterations": sub.iterations,
            "nodes": sub.nodes_total,
            "wall_time": now,
        }
        for k, v_ in enumerate(np.flatnonzero(ineq)):
            row[f"slack_{k}"] = -c[v_]
            row[f"dual_{k}"] = y[v_]
        tr.add(it, row)
        tr.nodes_total += sub.nodes_total
        if on_iterate is not None:
            on_iterate(it)
        if ci.size and ci.max() >= 0:
            tr.lemma_violations += 1  # strict feasibility must never break

        if (
            sub.psi_bound <= params.eps_final
            and comp <= params.eps_final
            and viol <= params.eps_final
        ):
            z = np.zeros(P.m)
            z[ineq] = np.where(np.abs(ci) <= params.eps_final, 0.0, ci)
            ok = check_kkt(
                P, x, y, z, params.eps_final, sub.Delta, norm,
                backend=mila_cfg.backend,
            )
            if ok:
                tr.status = _trace.EPS_KKT
                tr.kkt_ok = True
                tr.z = z
                break

        y_hat_eq = clamp_multiplier(P.C, y, params.y_max)[eq]
        if j > 0 and viol > max(params.eps_final, params.theta_eq * viol_prev):
            cert_j = min(cert_j * 4.0, max(explore, cert_base))
        else:
            cert_j = max(cert_base, cert_j * 0.5)
        viol_prev = viol
        mu = params.kappa_mu * mu
        eps = max(params.eps_final, params.kappa_eps * eps)
    else:
        tr.status = _trace.MAX_OUTER

    tr.x, tr.y = x, y
    if tr.z is None:
        tr.z = P.C.project(c)
    tr.Delta = sub.Delta if sub else float("nan")
    tr.objective = P.objective(x)
    tr.psi_value = sub.psi_value if sub else float("nan")
    tr.constraint_violation = viol
    tr.wall_time = time.perf_counter() - t_start
    return tr
