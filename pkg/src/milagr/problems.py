"""Benchmark instances and baselines.

* a two-variable toy problem whose feasible set is a pair of segments (the
  canonical illustration that partial localization separates critical points
  from merely stationary ones),
* a binary-control tracking problem with a switch budget, plus an exact
  dynamic-programming rounding of relaxed controls (the combinatorial
  integral approximation surrogate) and its enumeration oracle,
* a turbo-car point-to-point problem with hysteretic turbo mode, big-M
  traction coupling, nonlinear drag dynamics and grip limits,
* a grid dynamic-programming baseline for the turbo car.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InstanceInfeasibleHeuristic
from .model import (
    ConvexTarget,
    MixedIntegerLinearSet,
    NonpositiveOrthant,
    SmoothProgram,
    ZeroSet,
)

# reference objective values for the binary tracking problem (N = 100):
# relaxed lower bound and the published decomposition-pipeline outcomes
J_NLP_REFERENCE = 1.435
J_CIA_REFERENCE = 1.934
J_MILA_REFERENCE = 1.5035


# ---------------------------------------------------------------------------
# toy problem: min u^2 s.t. z <= u <= gap + z, z binary
# ---------------------------------------------------------------------------


def build_toy(variant: str = "base") -> SmoothProgram:
    """Two segments in the plane; ``base`` uses width 1 (the focus point
    (1,1) is escapable through the lower segment), ``gap`` uses width 1/2
    (the segments separate and (1,1) becomes critical for small radii)."""
    if variant not in ("base", "gap"):
        raise ValueError(f"unknown toy variant {variant!r}")
    width = 1.0 if variant == "base" else 0.5
    rows = np.array([[-1.0, 1.0], [1.0, -1.0]])
    upper = np.array([0.0, width])
    X = MixedIntegerLinearSet(rows, upper, [-5.0, 0.0], [5.0, 1.0], (1,))
    return SmoothProgram(
        n=2,
        m=0,
        f=lambda x: float(x[0] ** 2),
        grad_f=lambda x: np.array([2.0 * x[0], 0.0]),
        c=None,
        jac_c=None,
        X=X,
        C=ConvexTarget(()),
        name=f"toy-{variant}",
    )


# ---------------------------------------------------------------------------
# binary optimal control with a switch budget
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BocpInstance:
    """Tracking of state one by a binary control with bounded switching.

    Layout: states s_0..s_N, binaries b_0..b_{N-1}, switch slacks
    d_0..d_{N-2}; the dynamics and switch-count rows all live in the
    mixed-integer linear set, so the smooth program has no nonlinear rows.
    """

    N: int
    T: float
    sigma_max: int
    program: SmoothProgram

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def s_idx(self) -> np.ndarray:
        return np.arange(0, self.N + 1)

    @property
    def b_idx(self) -> np.ndarray:
        return np.arange(self.N + 1, 2 * self.N + 1)

    @property
    def d_idx(self) -> np.ndarray:
        return np.arange(2 * self.N + 1, 3 * self.N)

    def states_from_controls(self, b: np.ndarray) -> np.ndarray:
        """Forward recursion s_{k+1} = s_k + h (b_k - 1/2) from s_0 = 0."""
        s = np.zeros(self.N + 1)
        s[1:] = np.cumsum(self.h * (np.asarray(b, dtype=float) - 0.5))
        return s

    def cost_of_controls(self, b: np.ndarray) -> float:
        s = self.states_from_controls(b)
        return float(self.h * np.sum((s - 1.0) ** 2))

    def point_from_controls(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = np.zeros(3 * self.N)
        x[self.s_idx] = self.states_from_controls(b)
        x[self.b_idx] = b
        x[self.d_idx] = np.abs(np.diff(b))
        return x

    def feasible_start(self) -> np.ndarray:
        """Half ones then half zeros: one switch, returns to zero terminally
        (N must be even for exact terminal feasibility)."""
        b = np.zeros(self.N)
        b[: self.N // 2] = 1.0
        return self.point_from_controls(b)


def build_bocp(N: int = 100, T: float = 10.0, sigma_max: int = 10) -> BocpInstance:
    if N < 2:
        raise ValueError("need at least two intervals")
    h = T / N
    n = 3 * N
    s0, b0, d0 = 0, N + 1, 2 * N + 1
    rows = []
    ups = []
    # dynamics as paired inequalities: s_{k+1} - s_k - h b_k = -h/2
    for k in range(N):
        r = np.zeros(n)
        r[s0 + k + 1] = 1.0
        r[s0 + k] = -1.0
        r[b0 + k] = -h
        rows.append(r.copy())
        ups.append(-h / 2)
        rows.append(-r)
        ups.append(h / 2)
    # switch slacks: |b_{k+1} - b_k| <= d_k
    for k in range(N - 1):
        r = np.zeros(n)
        r[b0 + k + 1] = 1.0
        r[b0 + k] = -1.0
        r[d0 + k] = -1.0
        rows.append(r.copy())
        ups.append(0.0)
        r2 = r.copy()
        r2[b0 + k + 1] = -1.0
        r2[b0 + k] = 1.0
        rows.append(r2)
        ups.append(0.0)
    # switch budget
    r = np.zeros(n)
    r[d0:] = 1.0
    rows.append(r)
    ups.append(float(sigma_max))

    lower = np.concatenate([np.full(N + 1, -10.0), np.zeros(N), np.zeros(N - 1)])
    upper = np.concatenate([np.full(N + 1, 10.0), np.ones(N), np.ones(N - 1)])
    lower[s0] = upper[s0] = 0.0
    lower[s0 + N] = upper[s0 + N] = 0.0
    X = MixedIntegerLinearSet(
        np.array(rows), np.array(ups), lower, upper, tuple(range(b0, b0 + N))
    )

    s_slice = slice(0, N + 1)

    def f(x):
        return float(h * np.sum((x[s_slice] - 1.0) ** 2))

    def grad_f(x):
        g = np.zeros(n)
        g[s_slice] = 2.0 * h * (x[s_slice] - 1.0)
        return g

    prog = SmoothProgram(
        n=n, m=0, f=f, grad_f=grad_f, c=None, jac_c=None,
        X=X, C=ConvexTarget(()), name=f"bocp-N{N}",
    )
    return BocpInstance(N=N, T=T, sigma_max=sigma_max, program=prog)


def relax_integrality(P: SmoothProgram) -> SmoothProgram:
    """Same program with integrality dropped (boxes keep their bounds)."""
    X = P.X
    Xr = MixedIntegerLinearSet(
        X.rows, X.row_upper, X.lower, X.upper, (), check_nonempty=False
    )
    return SmoothProgram(
        n=P.n, m=P.m, f=P.f, grad_f=P.grad_f, c=P.c, jac_c=P.jac_c,
        X=Xr, C=P.C, name=P.name + "-relaxed",
    )


# ---------------------------------------------------------------------------
# combinatorial rounding under a switch budget (exact dynamic program)
# ---------------------------------------------------------------------------


def cia_round(relaxed_controls, sigma_max: int, h: float = 1.0) -> np.ndarray:
    """Round a [0,1] control sequence to binary, minimizing the maximum
    accumulated deviation  max_k |h * sum_{j<=k} (b_j - r_j)|  subject to at
    most ``sigma_max`` sign changes.

    Exact dynamic program over (stage, number of ones so far, last value,
    switches used); the ones count carries the accumulated deviation, which
    makes the recursion exact.  Ties prefer not switching, then the smaller
    control value.
    """
    r = np.asarray(relaxed_controls, dtype=float).ravel()
    if r.size == 0:
        return np.zeros(0, dtype=int)
    if np.any(r < -1e-9) or np.any(r > 1 + 1e-9):
        raise ValueError("relaxed controls must lie in [0, 1]")
    N = r.size
    S = int(sigma_max)
    R = np.cumsum(r)
    INF = np.inf

    # g[k] has shape (k+1 ones, last in {0,1}, switches 0..S): the smallest
    # achievable maximum of future accumulated deviations
    g = [None] * (N + 1)
    g[N] = np.zeros((N + 1, 2, S + 1))
    for k in range(N - 1, -1, -1):
        ones = np.arange(k + 1)
        cur = np.full((k + 1, 2, S + 1), INF)
        for b in (0, 1):
            dev = np.abs(h * (ones + b - R[k]))  # |A_{k+1}| given b_k = b
            nxt = g[k + 1][ones + b]  # (k+1, 2, S+1) at last=b
            stay = np.maximum(dev[:, None], nxt[:, b, :])  # b == last
            sw = np.full((k + 1, S + 1), INF)
            if S >= 1:
                # switching burns one unit of budget: state sigma moves on
                # with sigma + 1
                sw[:, :S] = np.maximum(dev[:, None], nxt[:, b, 1:])
            # cur[ones, last, sigma]: choosing b from last
            cur[:, b, :] = np.minimum(cur[:, b, :], stay)
            cur[:, 1 - b, :] = np.minimum(cur[:, 1 - b, :], sw)
        g[k] = cur

    # forward recovery; the artificial initial "last" imposes no switch cost
    b_seq = np.zeros(N, dtype=int)
    ones = 0
    sigma = 0
    last = None
    for k in range(N):
        best = None
        order = (last, 1 - last) if last is not None else (0, 1)
        for b in order:
            if b is None:
                continue
            s2 = sigma + (0 if (last is None or b == last) else 1)
            if s2 > S:
                continue
            dev = abs(h * (ones + b - R[k]))
            val = max(dev, g[k + 1][ones + b, b, s2])
            if best is None or val < best[0] - 1e-15:
                best = (val, b, s2)
        _, b, sigma = best
        b_seq[k] = b
        ones += b
        last = b
    return b_seq


def max_accumulated_deviation(b, r, h: float = 1.0) -> float:
    b = np.asarray(b, dtype=float)
    r = np.asarray(r, dtype=float)
    return float(np.max(np.abs(h * np.cumsum(b - r)))) if b.size else 0.0


def switch_count(b) -> int:
    b = np.asarray(b)
    return int(np.sum(b[1:] != b[:-1])) if b.size > 1 else 0


def cia_enumerate(r, sigma_max: int, h: float = 1.0):
    """Exhaustive oracle over all binary sequences (N <= 20)."""
    r = np.asarray(r, dtype=float).ravel()
    N = r.size
    if N > 20:
        raise ValueError("enumeration oracle limited to N <= 20")
    seqs = ((np.arange(2**N)[:, None] >> np.arange(N)[None, :]) & 1).astype(float)
    sw = np.sum(np.abs(np.diff(seqs, axis=1)), axis=1)
    ok = sw <= sigma_max
    devs = np.max(np.abs(h * np.cumsum(seqs - r, axis=1)), axis=1)
    devs[~ok] = np.inf
    k = int(np.argmin(devs))
    return seqs[k].astype(int), float(devs[k])


# ---------------------------------------------------------------------------
# turbo car
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TurboCarInstance:
    """Point-to-point drive with a hysteretic turbo.

    Continuous states: position s and velocity v at N+1 nodes; binary turbo
    mode w per node; controls accel a, brake b and auxiliary traction tau per
    interval.  Linear rows (position dynamics, hysteresis and traction big-M
    coupling) live in the mixed-integer set; the drag-coupled velocity
    dynamics and the terminal conditions are zero-target rows, and the grip
    limits (when finite) are nonpositive-target rows.
    """

    N: int
    T: float
    c_z: float
    program: SmoothProgram
    v_plus: float = 10.0
    v_minus: float = 5.0
    v_max: float = 25.0
    a_max: float = 5.0
    b_max: float = 10.0
    c_d: float = 1e-3
    c_g: float = 1e-3
    alpha_b: float = 1e-2
    s_target: float = 150.0

    @property
    def h(self) -> float:
        return self.T / self.N

    # layout ----------------------------------------------------------------
    @property
    def s_idx(self):
        return np.arange(0, self.N + 1)

    @property
    def v_idx(self):
        return np.arange(self.N + 1, 2 * self.N + 2)

    @property
    def w_idx(self):
        return np.arange(2 * self.N + 2, 3 * self.N + 3)

    @property
    def a_idx(self):
        return np.arange(3 * self.N + 3, 4 * self.N + 3)

    @property
    def b_idx(self):
        return np.arange(4 * self.N + 3, 5 * self.N + 3)

    @property
    def tau_idx(self):
        return np.arange(5 * self.N + 3, 6 * self.N + 3)

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        return (
            x[self.s_idx], x[self.v_idx], x[self.w_idx],
            x[self.a_idx], x[self.b_idx], x[self.tau_idx],
        )

    def pack(self, s, v, w, a, b, tau) -> np.ndarray:
        return np.concatenate([s, v, w, a, b, tau])

    def zero_start(self) -> np.ndarray:
        return np.zeros(self.program.n)

    def grip_bound(self, v):
        return self.c_z + self.c_g * np.asarray(v) ** 2

    def hysteresis_next(self, w: int, v_next: float) -> int:
        if v_next > self.v_plus:
            return 1
        if v_next < self.v_minus:
            return 0
        return int(w)

    def simulate(self, a, b, clip: bool = False):
        """Forward Euler rollout of controls from rest; returns (s, v, w,
        tau).  With ``clip`` the velocity is kept inside [0, v_max]."""
        N = self.N
        h = self.h
        s = np.zeros(N + 1)
        v = np.zeros(N + 1)
        w = np.zeros(N + 1, dtype=int)
        tau = np.zeros(N)
        for k in range(N):
            tau[k] = (3.0 if w[k] else 1.0) * a[k]
            s[k + 1] = s[k] + h * v[k]
            v[k + 1] = v[k] + h * (tau[k] - b[k] - self.c_d * v[k] ** 2)
            if clip:
                v[k + 1] = min(max(v[k + 1], 0.0), self.v_max)
            w[k + 1] = self.hysteresis_next(w[k], v[k + 1])
        return s, v, w, tau

    def check_hysteresis(self, x, tol: float = 1e-6) -> bool:
        """Mode switches only when the velocity crosses its thresholds."""
        _, v, w, _, _, _ = self.unpack(x)
        wi = np.round(w).astype(int)
        for k in range(self.N):
            expect = self.hysteresis_next(wi[k], v[k + 1])
            boundary = (
                abs(v[k + 1] - self.v_plus) <= tol or abs(v[k + 1] - self.v_minus) <= tol
            )
            if wi[k + 1] != expect and not boundary:
                return False
        return True


def build_turbocar(
    N: int = 100,
    c_z: float = np.inf,
    T: float = 10.0,
    position_rows_in_set: bool = False,
) -> TurboCarInstance:
    """With ``position_rows_in_set`` the (linear) position dynamics become
    hard polyhedral rows; by default they join the velocity dynamics in the
    relaxed zero-target block.  Keeping them relaxed lets the outer loops
    restructure trajectories locally, which measurably avoids infeasible
    trust-region traps on cold starts."""
    if N < 2:
        raise ValueError("need at least two intervals")
    h = T / N
    v_plus, v_minus, v_max = 10.0, 5.0, 25.0
    a_max, b_max = 5.0, 10.0
    c_d, c_g, alpha_b = 1e-3, 1e-3, 1e-2
    s_target = 150.0
    Mv = 25.0  # velocity comparisons: v in [0, 25]
    Mt = 15.0  # traction rows: tau - a and 3a - tau bounded by 15

    n = 6 * N + 3
    iS, iV, iW = 0, N + 1, 2 * N + 2
    iA, iB, iT = 3 * N + 3, 4 * N + 3, 5 * N + 3

    rows = []
    ups = []

    def add(coeffs: dict, up: float):
        r = np.zeros(n)
        for j, cj in coeffs.items():
            r[j] = cj
        rows.append(r)
        ups.append(up)

    for k in range(N):
        if position_rows_in_set:
            # position dynamics (equality pair): s_{k+1} - s_k - h v_k = 0
            add({iS + k + 1: 1.0, iS + k: -1.0, iV + k: -h}, 0.0)
            add({iS + k + 1: -1.0, iS + k: 1.0, iV + k: h}, 0.0)
        # hysteresis: above v+ forces the turbo on, below v- forces it off,
        # and transitions require the matching threshold crossing
        add({iV + k + 1: 1.0, iW + k + 1: -Mv}, v_plus)
        add({iV + k + 1: -1.0, iW + k + 1: Mv}, Mv - v_minus)
        add({iV + k + 1: -1.0, iW + k + 1: Mv, iW + k: -Mv}, Mv - v_plus)
        add({iV + k + 1: 1.0, iW + k + 1: -Mv, iW + k: Mv}, Mv + v_minus)
        # traction selection: tau = a when off, tau = 3a when on
        add({iT + k: 1.0, iA + k: -1.0, iW + k: -Mt}, 0.0)
        add({iT + k: -1.0, iA + k: 1.0, iW + k: -Mt}, 0.0)
        add({iT + k: 1.0, iA + k: -3.0, iW + k: Mt}, Mt)
        add({iT + k: -1.0, iA + k: 3.0, iW + k: Mt}, Mt)

    lower = np.zeros(n)
    upper = np.zeros(n)
    lower[iS : iS + N + 1] = 0.0
    upper[iS : iS + N + 1] = 260.0
    lower[iV : iV + N + 1] = 0.0
    upper[iV : iV + N + 1] = v_max
    lower[iW : iW + N + 1] = 0.0
    upper[iW : iW + N + 1] = 1.0
    lower[iA : iA + N] = 0.0
    upper[iA : iA + N] = a_max
    lower[iB : iB + N] = 0.0
    upper[iB : iB + N] = b_max
    lower[iT : iT + N] = 0.0
    upper[iT : iT + N] = 3.0 * a_max
    # initial state pinned at rest with the turbo off
    upper[iS] = lower[iS] = 0.0
    upper[iV] = lower[iV] = 0.0
    upper[iW] = lower[iW] = 0.0

    X = MixedIntegerLinearSet(
        np.array(rows), np.array(ups), lower, upper, tuple(range(iW, iW + N + 1))
    )

    finite_grip = np.isfinite(c_z)
    n_pos = 0 if position_rows_in_set else N
    n_eq = n_pos + N + 2
    m = n_eq + (2 * N if finite_grip else 0)
    blocks = [ZeroSet(n_eq)]
    if finite_grip:
        blocks.append(NonpositiveOrthant(2 * N))

    sS = slice(iS, iS + N + 1)
    sV = slice(iV, iV + N + 1)
    sA = slice(iA, iA + N)
    sB = slice(iB, iB + N)
    sT = slice(iT, iT + N)

    def f(x):
        a = x[sA]
        b = x[sB]
        return float(h * np.sum(a**2 + alpha_b * b**3))

    def grad_f(x):
        g = np.zeros(n)
        g[sA] = 2.0 * h * x[sA]
        g[sB] = 3.0 * alpha_b * h * x[sB] ** 2
        return g

    def c(x):
        s = x[sS]
        v = x[sV]
        b = x[sB]
        tau = x[sT]
        out = np.empty(m)
        if n_pos:
            out[:n_pos] = s[1:] - s[:-1] - h * v[:-1]
        out[n_pos : n_pos + N] = v[1:] - v[:-1] - h * (tau - b - c_d * v[:-1] ** 2)
        out[n_pos + N] = s[N] - s_target
        out[n_pos + N + 1] = v[N]
        if finite_grip:
            gb = c_z + c_g * v[:-1] ** 2
            out[n_eq : n_eq + N] = tau - b - gb
            out[n_eq + N :] = -(tau - b) - gb
        return out

    def jac_c(x):
        v = x[sV]
        J = np.zeros((m, n))
        for k in range(N):
            if n_pos:
                J[k, iS + k + 1] = 1.0
                J[k, iS + k] = -1.0
                J[k, iV + k] = -h
            r = n_pos + k
            J[r, iV + k + 1] = 1.0
            J[r, iV + k] = -1.0 + 2.0 * h * c_d * v[k]
            J[r, iT + k] = -h
            J[r, iB + k] = h
        J[n_pos + N, iS + N] = 1.0
        J[n_pos + N + 1, iV + N] = 1.0
        if finite_grip:
            for k in range(N):
                J[n_eq + k, iT + k] = 1.0
                J[n_eq + k, iB + k] = -1.0
                J[n_eq + k, iV + k] = -2.0 * c_g * v[k]
                J[n_eq + N + k, iT + k] = -1.0
                J[n_eq + N + k, iB + k] = 1.0
                J[n_eq + N + k, iV + k] = -2.0 * c_g * v[k]
        return J

    prog = SmoothProgram(
        n=n, m=m, f=f, grad_f=grad_f, c=c, jac_c=jac_c,
        X=X, C=ConvexTarget(tuple(blocks)),
        name=f"turbocar-N{N}-cz{c_z}",
    )
    return TurboCarInstance(N=N, T=T, c_z=c_z, program=prog)


def heuristic_start(tc: TurboCarInstance, throttle: float = 0.9) -> np.ndarray:
    """Forward-simulated warm start: accelerate at 90% throttle until 90% of
    the speed limit, hold, then brake at 90% to stop by the final time.  With
    a finite grip limit the traction is additionally capped at 99% of the
    grip bound so the start is strictly feasible for the barrier rows."""
    for factor in (throttle, 0.8 * throttle):
        x = _simulate_heuristic(tc, factor)
        if x is not None:
            return x
    raise InstanceInfeasibleHeuristic(
        "heuristic simulation left the velocity box even at reduced throttle"
    )


def _simulate_heuristic(tc: TurboCarInstance, factor: float):
    N, h = tc.N, tc.h
    a = np.zeros(N)
    b = np.zeros(N)
    s = np.zeros(N + 1)
    v = np.zeros(N + 1)
    w = np.zeros(N + 1, dtype=int)
    tau = np.zeros(N)
    v_hold = factor * tc.v_max
    finite = np.isfinite(tc.c_z)
    for k in range(N):
        mode = 3.0 if w[k] else 1.0
        time_left = (N - k) * h
        if time_left <= v[k] / (factor * tc.b_max) + 1e-12:
            # braking phase; keep the velocity nonnegative
            a[k] = 0.0
            bk = factor * tc.b_max
            bk = min(bk, v[k] / h - tc.c_d * v[k] ** 2)
            if finite:
                bk = min(bk, 0.99 * tc.grip_bound(v[k]))
            b[k] = max(bk, 0.0)
        else:
            ak = factor * tc.a_max
            # cap so the velocity settles at the hold speed
            ak = min(ak, max(0.0, ((v_hold - v[k]) / h + tc.c_d * v[k] ** 2) / mode))
            if finite:
                ak = min(ak, 0.99 * tc.grip_bound(v[k]) / mode)
            a[k] = ak
        tau[k] = (3.0 if w[k] else 1.0) * a[k]
        s[k + 1] = s[k] + h * v[k]
        v[k + 1] = v[k] + h * (tau[k] - b[k] - tc.c_d * v[k] ** 2)
        if v[k + 1] > tc.v_max + 1e-9 or v[k + 1] < -1e-9:
            return None
        v[k + 1] = min(max(v[k + 1], 0.0), tc.v_max)
        w[k + 1] = tc.hysteresis_next(w[k], v[k + 1])
    x = tc.pack(s, v, w.astype(float), a, b, tau)
    if not tc.program.X.contains(x, 1e-6):
        return None
    return x


# ---------------------------------------------------------------------------
# dynamic-programming baseline for the turbo car
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DpConfig:
    n_s: int = 100  # position intervals over [0, 150]
    n_v: int = 50  # velocity intervals over [0, 25]
    n_a: int = 20  # acceleration intervals over [0, 5]
    n_b: int = 20  # brake intervals over [0, 10]
    lambda_dp: float = 100.0
    N: int = 100
    T: float = 10.0


@dataclass
class DpResult:
    cost: float
    control_cost: float
    s: np.ndarray
    v: np.ndarray
    w: np.ndarray
    a: np.ndarray
    b: np.ndarray
    tau: np.ndarray
    final_position_error: float
    final_velocity_error: float


def dp_solve(cfg: DpConfig, c_z: float = np.inf) -> DpResult:
    """Backward value iteration on the (position, velocity, turbo) grid with
    bilinear interpolation, followed by a rollout on the true dynamics.
    Terminal conditions and grip violations enter as quadratic penalties."""
    lam = cfg.lambda_dp
    h = cfg.T / cfg.N if cfg.N else 0.0
    # the working position range extends past the target at the same spacing
    # so that overshoot carries its true penalty instead of reading the edge
    ds0 = 150.0 / cfg.n_s
    buffer_cells = int(np.ceil(30.0 / ds0))
    s_hi = 150.0 + buffer_cells * ds0
    s_grid = np.linspace(0.0, s_hi, cfg.n_s + buffer_cells + 1)
    v_grid = np.linspace(0.0, 25.0, cfg.n_v + 1)
    a_grid = np.linspace(0.0, 5.0, cfg.n_a + 1)
    b_grid = np.linspace(0.0, 10.0, cfg.n_b + 1)
    c_d, c_g, alpha_b = 1e-3, 1e-3, 1e-2

    def terminal(s, v):
        return lam * ((s - 150.0) ** 2 + v**2)

    if cfg.N == 0:
        cost = float(terminal(0.0, 0.0))
        return DpResult(cost, 0.0, np.zeros(1), np.zeros(1), np.zeros(1, dtype=int),
                        np.zeros(0), np.zeros(0), np.zeros(0), 150.0, 0.0)

    S, V = np.meshgrid(s_grid, v_grid, indexing="ij")
    ns, nv = s_grid.size, v_grid.size
    ds = s_grid[1] - s_grid[0]
    dv = v_grid[1] - v_grid[0]

    # position step is control independent: interpolation weights reused
    Sn = np.clip(S + h * V, 0.0, s_hi)
    i0 = np.clip((Sn / ds).astype(int), 0, ns - 2)
    ws = (Sn - s_grid[i0]) / ds

    def interp(Vn_w, vn, wn):
        """bilinear in (s, v) of the stage value for mode wn at (Sn, vn)."""
        j0 = np.clip((vn / dv).astype(int), 0, nv - 2)
        wv = (vn - v_grid[j0]) / dv
        out = np.empty_like(vn)
        for mode in (0, 1):
            mask = wn == mode
            if not mask.any():
                continue
            tab = Vn_w[mode]
            a00 = tab[i0[mask], j0[mask]]
            a10 = tab[i0[mask] + 1, j0[mask]]
            a01 = tab[i0[mask], j0[mask] + 1]
            a11 = tab[i0[mask] + 1, j0[mask] + 1]
            wsm = ws[mask]
            wvm = wv[mask]
            out[mask] = (
                a00 * (1 - wsm) * (1 - wvm)
                + a10 * wsm * (1 - wvm)
                + a01 * (1 - wsm) * wvm
                + a11 * wsm * wvm
            )
        return out

    def stage_step(Vnext, w, a, b):
        tau = (3.0 if w else 1.0) * a
        vn = np.clip(V + h * (tau - b - c_d * V**2), 0.0, 25.0)
        wn = np.where(vn > 10.0, 1, np.where(vn < 5.0, 0, w))
        cost = h * (a**2 + alpha_b * b**3)
        if np.isfinite(c_z):
            viol = np.maximum(0.0, abs(tau - b) - c_z - c_g * V**2)
            cost = cost + lam * h * viol**2
        return cost + interp(Vnext, vn, wn)

    # stage value tables kept for the rollout, which re-optimizes controls on
    # the continuous state against the interpolated cost-to-go
    tabs = [None] * (cfg.N + 1)
    tabs[cfg.N] = [terminal(S, V), terminal(S, V)]
    for k in range(cfg.N - 1, -1, -1):
        new = [None, None]
        for w in (0, 1):
            best = None
            for a in a_grid:
                for b in b_grid:
                    val = stage_step(tabs[k + 1], w, a, b)
                    best = val if best is None else np.minimum(best, val)
            new[w] = best
        tabs[k] = new

    s = np.zeros(cfg.N + 1)
    v = np.zeros(cfg.N + 1)
    w = np.zeros(cfg.N + 1, dtype=int)
    a_tr = np.zeros(cfg.N)
    b_tr = np.zeros(cfg.N)
    tau_tr = np.zeros(cfg.N)
    control_cost = 0.0
    total = 0.0
    for k in range(cfg.N):
        best = (np.inf, 0.0, 0.0)
        for a in a_grid:
            for b in b_grid:
                tau = (3.0 if w[k] else 1.0) * a
                vn = min(max(v[k] + h * (tau - b - c_d * v[k] ** 2), 0.0), 25.0)
                sn = min(max(s[k] + h * v[k], 0.0), s_hi)
                wn = 1 if vn > 10.0 else (0 if vn < 5.0 else w[k])
                cost = h * (a**2 + alpha_b * b**3)
                if np.isfinite(c_z):
                    viol = max(0.0, abs(tau - b) - c_z - c_g * v[k] ** 2)
                    cost += lam * h * viol**2
                j0 = min(int(vn / dv), nv - 2)
                i0s = min(int(sn / ds), ns - 2)
                wv = (vn - v_grid[j0]) / dv
                wss = (sn - s_grid[i0s]) / ds
                tab = tabs[k + 1][wn]
                val = (
                    tab[i0s, j0] * (1 - wss) * (1 - wv)
                    + tab[i0s + 1, j0] * wss * (1 - wv)
                    + tab[i0s, j0 + 1] * (1 - wss) * wv
                    + tab[i0s + 1, j0 + 1] * wss * wv
                )
                if cost + val < best[0] - 1e-12:
                    best = (cost + val, a, b)
        _, a_k, b_k = best
        a_tr[k] = a_k
        b_tr[k] = b_k
        tau_tr[k] = (3.0 if w[k] else 1.0) * a_k
        stage = h * (a_k**2 + alpha_b * b_k**3)
        control_cost += stage
        if np.isfinite(c_z):
            viol = max(0.0, abs(tau_tr[k] - b_k) - c_z - c_g * v[k] ** 2)
            total += lam * h * viol**2
        total += stage
        s[k + 1] = s[k] + h * v[k]
        v[k + 1] = v[k] + h * (tau_tr[k] - b_k - c_d * v[k] ** 2)
        v[k + 1] = min(max(v[k + 1], 0.0), 25.0)
        w[k + 1] = 1 if v[k + 1] > 10.0 else (0 if v[k + 1] < 5.0 else w[k])
    total += terminal(s[-1], v[-1])
    return DpResult(
        cost=float(total),
        control_cost=float(control_cost),
        s=s, v=v, w=w, a=a_tr, b=b_tr, tau=tau_tr,
        final_position_error=float(abs(s[-1] - 150.0)),
        final_velocity_error=float(abs(v[-1])),
    )
