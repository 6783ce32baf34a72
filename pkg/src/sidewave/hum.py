"""Sidewise HUM control synthesis.

The control is ``u = psi(0, .)`` where ``psi`` solves the backward system
driven at x = L by the minimizer ``s`` of

    J(s) = a(0+)/2 int_0^T psi(0, t)^2 dt + a(L-) <s, p>  (+ eps ||S||^2),

parameterized by the antiderivative ``S`` of ``s``.  The gradient comes
from the discrete duality identity

    a(0+) int u psi(0, .) + a(L-) int s y(L, .) = 0,

so dJ/ds = a(L-) W (p - y_u(L, .)) with one backward and one forward solve.
The simultaneous variant adds terminal adjoint data (psi0, psi1) and the
pairing terms <z1, psi0> - <z0, psi1>, whose stationarity enforces
y(T) = z0 and y_t(T) = z1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .coeffs import CoefficientProfile, Grid, compute_beta
from .fdsolver import WaveOperator, adjoint_solve, forward_solve
from .signals import (
    SourceHminus,
    TimeSignal,
    lowpass,
    norm_L2,
    pairing,
    trapezoid_weights,
)

log = logging.getLogger(__name__)


DENSE_LIMIT = 4000


class InfeasibleProblem(ValueError):
    """Time horizon too short or target incompatible with the window."""


@dataclass
class ControlProblem:
    profile: CoefficientProfile
    grid: Grid
    p: TimeSignal
    window: Optional[tuple[float, float]] = None
    z0: Optional[np.ndarray] = None
    z1: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None
    eps: Optional[float] = None
    eps_rel: float = 1e-8
    tol: float = 1e-6
    max_iter: int = 500
    filter_cutoff: Optional[float] = 2.0 / 3.0
    filter_control: Optional[bool] = None
    method: str = "auto"
    source_metric: Optional[str] = None

    def __post_init__(self):
        self.beta = compute_beta(self.profile)
        Lb = self.profile.L * self.beta
        T = self.grid.T
        if self.simultaneous:
            if T <= 2 * Lb:
                raise InfeasibleProblem(f"T={T} <= 2 L beta = {2 * Lb}")
            default = (Lb, T - Lb)
        else:
            if T <= Lb:
                raise InfeasibleProblem(f"T={T} <= L beta = {Lb}")
            default = (Lb, T)
        self.window = default if self.window is None else tuple(self.window)
        if self.filter_control is None:
            # the final state responds to the whole control spectrum, so a
            # post-hoc lowpass of u would spoil the terminal conditions
            self.filter_control = not self.simultaneous
        if len(self.p) != self.grid.Nt + 1:
            raise ValueError("target p must be sampled on the grid's time levels")

    @property
    def simultaneous(self) -> bool:
        return self.z0 is not None or self.z1 is not None

    @property
    def a0(self) -> float:
        return self.profile.a0_plus

    @property
    def aL(self) -> float:
        return self.profile.aL_minus


@dataclass
class ControlSolution:
    u: TimeSignal
    s_opt: SourceHminus
    J_value: float
    tracking_residual: float
    final_residual: Optional[dict]
    iterations: int
    gradient_norm_history: list[float]
    converged: bool
    yL: TimeSignal
    p: TimeSignal
    eps: float
    filter_cutoff: Optional[float]
    terminal: Optional[tuple[np.ndarray, np.ndarray]] = None
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "J": self.J_value,
            "tracking_residual": self.tracking_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "eps": self.eps,
            "filter_cutoff": self.filter_cutoff,
            "u_L2": norm_L2(self.u),
        }
        if self.final_residual is not None:
            out.update({f"final_{k}": v for k, v in self.final_residual.items()})
        out.update(self.diagnostics)
        return out


# --------------------------------------------------------------------------
# parameterization of s by its antiderivative on the window


class SourceMap:
    """Free antiderivative values on the window <-> nodal source samples.

    ``S`` vanishes before the window and is held constant after it, so
    ``s = S'`` is supported in the window.  When the window reaches T the
    last node stays free, which leaves p(T) unconstrained.
    """

    def __init__(self, grid: Grid, window):
        t = grid.t
        tol = 1e-9 * grid.dt
        lo, hi = window
        if hi >= grid.T - tol:
            free = np.flatnonzero(t > lo + tol)
        else:
            free = np.flatnonzero((t > lo + tol) & (t < hi - tol))
        if free.size == 0:
            raise InfeasibleProblem(f"window {window} contains no time nodes")
        self.grid = grid
        self.window = (float(lo), float(hi))
        self.first = int(free[0])
        self.last = int(free[-1])
        self.n_free = free.size
        self.w = trapezoid_weights(grid.Nt + 1, grid.dt)
        held = self.w[self.last + 1 :].sum()
        self.metric = self.w[self.first : self.last + 1].copy()
        self.metric[-1] += held

    def expand(self, S_free: np.ndarray) -> np.ndarray:
        shape = (self.grid.Nt + 1,) + S_free.shape[1:]
        S = np.zeros(shape)
        S[self.first : self.last + 1] = S_free
        S[self.last + 1 :] = S_free[-1]
        return S

    def expand_T(self, g: np.ndarray) -> np.ndarray:
        out = g[self.first : self.last + 1].copy()
        out[-1] += g[self.last + 1 :].sum(axis=0)
        return out

    def rate(self, S_full: np.ndarray) -> np.ndarray:
        d = np.diff(S_full, axis=0, prepend=np.zeros((1,) + S_full.shape[1:]))
        w = self.w if S_full.ndim == 1 else self.w[:, None]
        return d / w

    def rate_T(self, g: np.ndarray) -> np.ndarray:
        w = self.w if g.ndim == 1 else self.w[:, None]
        q = g / w
        out = q.copy()
        out[:-1] -= q[1:]
        return out

    def source(self, S_free: np.ndarray) -> SourceHminus:
        return SourceHminus.from_antiderivative(self.expand(S_free), self.grid.dt, self.window)

    def to_free(self, source: SourceHminus) -> np.ndarray:
        return source.S.samples[self.first : self.last + 1].copy()


def _space_h1_matrix(op: WaveOperator, L: float):
    """Banded form of K + M / L^2 (the discrete H^1(0, L) Gram matrix)."""
    n = op.mass.size
    c = op.a_face / op.dx
    diag = op.mass / L**2
    diag = diag.copy()
    diag[:-1] += c
    diag[1:] += c
    ab = np.zeros((3, n))
    ab[0, 1:] = -c
    ab[1] = diag
    ab[2, :-1] = -c
    return ab


def h1_space_norm(op: WaveOperator, f: np.ndarray, L: float) -> float:
    kf = _banded_apply(_space_h1_matrix(op, L), f)
    return float(np.sqrt(max(f @ kf, 0.0)))


def hminus_space_norm(op: WaveOperator, f: np.ndarray, L: float) -> float:
    """Dual norm of f against the discrete H^1(0, L) norm."""
    ab = _space_h1_matrix(op, L)
    mf = op.mass * f
    v = solve_banded((1, 1), ab, mf)
    return float(np.sqrt(max(mf @ v, 0.0)))


def l2_space_norm(op: WaveOperator, f: np.ndarray) -> float:
    return float(np.sqrt(max(np.sum(op.mass * f * f), 0.0)))


# --------------------------------------------------------------------------
# functional and gradient


class _Workspace:
    """Per-problem cached operators and the (possibly filtered) targets."""

    def __init__(self, problem: ControlProblem):
        self.problem = problem
        g = problem.grid
        self.op = WaveOperator.build(problem.profile, g)
        self.smap = SourceMap(g, problem.window)
        self.w = trapezoid_weights(g.Nt + 1, g.dt)
        self.L = problem.profile.L
        p = problem.p
        z0 = None if problem.z0 is None else np.asarray(problem.z0, dtype=float)
        z1 = None if problem.z1 is None else np.asarray(problem.z1, dtype=float)
        if problem.simultaneous:
            z0 = np.zeros(g.Nx + 1) if z0 is None else z0
            z1 = np.zeros(g.Nx + 1) if z1 is None else z1
        if problem.y0 is not None or problem.y1 is not None:
            free = forward_solve(problem.profile, g, problem.y0, problem.y1, None, op=self.op)
            p = p - free.trace_yL
            if problem.simultaneous:
                z0 = z0 - free.final_state[0]
                z1 = z1 - free.final_state[1]
        if problem.filter_cutoff is not None:
            p = lowpass(p, problem.filter_cutoff)
        self.p_eff = p.masked(problem.window)
        self.z0 = z0
        self.z1 = z1
        self.ab = _space_h1_matrix(self.op, self.L)
        self.eps = 0.0
        self.source_metric = problem.source_metric
        if self.source_metric is None:
            self.source_metric = "s" if problem.simultaneous else "S"
        if self.source_metric not in ("S", "s"):
            raise ValueError(f"source_metric must be 'S' or 's', got {self.source_metric!r}")
        if self.source_metric == "s":
            self.s_gram = self._rate_gram()

    def _rate_gram(self) -> np.ndarray:
        # sum_n w[n] s[n]^2 = sum_n (S[n] - S[n-1])^2 / w[n] on the free nodes,
        # in banded storage for solve_banded
        sm = self.smap
        iw = 1.0 / self.w
        n = sm.n_free
        idx = np.arange(sm.first, sm.last + 1)
        diag = iw[idx].copy()
        diag[:-1] += iw[idx[1:]]
        ab = np.zeros((3, n))
        ab[0, 1:] = -iw[idx[1:]]
        ab[1] = diag
        ab[2, :-1] = -iw[idx[1:]]
        return ab

    # packing of the optimization vector ------------------------------------

    @property
    def n_vars(self) -> int:
        n = self.smap.n_free
        if self.problem.simultaneous:
            n += 2 * (self.problem.grid.Nx + 1)
        return n

    def unpack(self, x):
        n = self.smap.n_free
        if not self.problem.simultaneous:
            return x, None, None
        m = self.problem.grid.Nx + 1
        return x[:n], x[n : n + m], x[n + m :]

    def pack(self, gS, g0=None, g1=None):
        if not self.problem.simultaneous:
            return gS
        return np.concatenate([gS, g0, g1])

    def _source_apply(self, S):
        if self.source_metric == "S":
            return self.smap.metric * S
        return _banded_apply(self.s_gram, S)

    def _source_solve(self, r):
        if self.source_metric == "S":
            return r / self.smap.metric
        return solve_banded((1, 1), self.s_gram, r)

    def precondition(self, r):
        """Riesz map: gradient -> direction in (source) x L^2 x H^-1."""
        rS, r0, r1 = self.unpack(r)
        zS = self._source_solve(rS)
        if not self.problem.simultaneous:
            return zS
        m = self.op.mass
        z0 = r0 / m
        z1 = _banded_apply(self.ab, r1 / m) / m
        return self.pack(zS, z0, z1)

    def metric_apply(self, x):
        """Gram matrix of the optimization space (inverse of ``precondition``)."""
        xS, x0, x1 = self.unpack(x)
        gS = self._source_apply(xS)
        if not self.problem.simultaneous:
            return gS
        m = self.op.mass
        g0 = m * x0
        g1 = m * solve_banded((1, 1), self.ab, m * x1)
        return self.pack(gS, g0, g1)

    # solves -----------------------------------------------------------------

    def adjoint(self, x):
        S, psi0, psi1 = self.unpack(x)
        s = self.smap.rate(self.smap.expand(S))
        terminal = None if psi0 is None else (psi0, psi1)
        res = adjoint_solve(self.problem.profile, self.problem.grid, s, terminal, op=self.op)
        return s, res.trace_psi0.samples

    def value(self, x) -> float:
        S, psi0, psi1 = self.unpack(x)
        _, u = self.adjoint(x)
        pr = self.problem
        J = 0.5 * pr.a0 * np.sum(self.w * u * u)
        J += pr.aL * pairing(self.smap.source(S), self.p_eff)
        if pr.simultaneous:
            J += np.sum(self.op.mass * self.z1 * psi0) - np.sum(self.op.mass * self.z0 * psi1)
        if self.eps:
            J += self.eps * float(x @ self.metric_apply(x))
        return float(J)

    def gradient(self, x, linear_only: bool = False):
        """Euclidean gradient; ``linear_only`` drops the target terms (Hessian action)."""
        pr = self.problem
        _, u = self.adjoint(x)
        fw = forward_solve(pr.profile, pr.grid, None, None, u, op=self.op)
        yL = fw.trace_yL.samples
        target = 0.0 if linear_only else self.p_eff.samples
        g_s = pr.aL * self.w * (target - yL)
        gS = self.smap.expand_T(self.smap.rate_T(g_s))
        if pr.simultaneous:
            yT, vT = fw.final_state
            z0 = 0.0 if linear_only else self.z0
            z1 = 0.0 if linear_only else self.z1
            g = self.pack(gS, self.op.mass * (z1 - vT), -self.op.mass * (z0 - yT))
        else:
            g = gS
        if self.eps:
            g = g + 2.0 * self.eps * self.metric_apply(x)
        return g, u, fw

    def hessian(self, x):
        return self.gradient(x, linear_only=True)[0]

    def hessian_matrix(self, chunk: int = 256) -> np.ndarray:
        """Dense Hessian from batched backward and forward sweeps."""
        pr = self.problem
        n = self.n_vars
        H = np.empty((n, n))
        for start in range(0, n, chunk):
            cols = np.arange(start, min(n, start + chunk))
            X = np.zeros((n, cols.size))
            X[cols, np.arange(cols.size)] = 1.0
            S, P0, P1 = self.unpack(X)
            s = self.smap.rate(self.smap.expand(S))
            terminal = None if P0 is None else (P0, P1)
            adj = adjoint_solve(pr.profile, pr.grid, s, terminal, op=self.op)
            u = adj.trace_psi0
            fw = forward_solve(pr.profile, pr.grid, None, None, u, op=self.op)
            gS = self.smap.expand_T(self.smap.rate_T(-pr.aL * self.w[:, None] * fw.trace_yL))
            if pr.simultaneous:
                yT, vT = fw.final_state
                m = self.op.mass[:, None]
                H[:, cols] = np.vstack([gS, -m * vT, m * yT])
            else:
                H[:, cols] = gS
        return 0.5 * (H + H.T)

    def gram_matrix(self) -> np.ndarray:
        n = self.n_vars
        return np.column_stack([self.metric_apply(e) for e in np.eye(n)])


def _banded_apply(ab: np.ndarray, f: np.ndarray) -> np.ndarray:
    out = ab[1] * f
    out[:-1] += ab[0, 1:] * f[1:]
    out[1:] += ab[2, :-1] * f[:-1]
    return out


def eval_J(problem: ControlProblem, s: SourceHminus, psi0=None, psi1=None) -> float:
    ws = _Workspace(problem)
    if problem.eps:
        ws.eps = problem.eps
    _check_support(ws, s)
    x = _pack_nodal(ws, s, psi0, psi1)
    return ws.value(x)


def grad_J(problem: ControlProblem, s: SourceHminus, psi0=None, psi1=None) -> np.ndarray:
    """Gradient of J with respect to the free antiderivative values on the window
    (followed by the psi0, psi1 blocks in the simultaneous case)."""
    ws = _Workspace(problem)
    if problem.eps:
        ws.eps = problem.eps
    _check_support(ws, s)
    x = _pack_nodal(ws, s, psi0, psi1)
    return ws.gradient(x)[0]


def _pack_nodal(ws: _Workspace, s: SourceHminus, psi0, psi1) -> np.ndarray:
    S = ws.smap.to_free(s)
    if not ws.problem.simultaneous:
        return S
    m = ws.problem.grid.Nx + 1
    psi0 = np.zeros(m) if psi0 is None else np.asarray(psi0, dtype=float)
    psi1 = np.zeros(m) if psi1 is None else np.asarray(psi1, dtype=float)
    return ws.pack(S, psi0, psi1)


def _check_support(ws: _Workspace, s: SourceHminus) -> None:
    S = s.S.samples
    sm = ws.smap
    scale = max(np.abs(S).max(), 1e-300)
    before = np.abs(S[: sm.first]).max() if sm.first > 0 else 0.0
    after = np.abs(S[sm.last + 1 :] - S[sm.last]).max() if sm.last < S.size - 1 else 0.0
    if max(before, after) > 1e-12 * scale:
        raise InfeasibleProblem(
            f"source support leaves the window {sm.window}"
        )


# --------------------------------------------------------------------------
# Krylov solvers


def _conjugate_residual(apply_A, b, precond, tol, max_iter):
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    Az = apply_A(z)
    p, Ap = z.copy(), Az.copy()
    zAz = z @ Az
    hist = [float(np.sqrt(max(r @ z, 0.0)))]
    r0 = hist[0]
    if r0 == 0.0:
        return x, hist, True, 0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        MAp = precond(Ap)
        denom = Ap @ MAp
        if denom <= 0:
            break
        alpha = zAz / denom
        x += alpha * p
        r -= alpha * Ap
        z -= alpha * MAp
        hist.append(float(np.sqrt(max(r @ z, 0.0))))
        if hist[-1] <= tol * r0:
            converged = True
            break
        Az = apply_A(z)
        zAz_new = z @ Az
        beta = zAz_new / zAz
        zAz = zAz_new
        p = z + beta * p
        Ap = Az + beta * Ap
    return x, hist, converged, it


def _conjugate_gradient(apply_A, b, precond, tol, max_iter):
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    d = z.copy()
    rz = r @ z
    hist = [float(np.sqrt(max(rz, 0.0)))]
    r0 = hist[0]
    if r0 == 0.0:
        return x, hist, True, 0
    best_x, best = x.copy(), r0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Ad = apply_A(d)
        dAd = d @ Ad
        if dAd <= 0:
            break
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        z = precond(r)
        rz_new = r @ z
        hist.append(float(np.sqrt(max(rz_new, 0.0))))
        if hist[-1] < best:
            best, best_x = hist[-1], x.copy()
        if hist[-1] <= tol * r0:
            converged = True
            break
        d = z + (rz_new / rz) * d
        rz = rz_new
    return best_x, hist, converged, it


def _minimize(ws: _Workspace):
    pr = ws.problem
    zero = np.zeros(ws.n_vars)
    g0 = ws.gradient(zero)[0]
    b = -g0
    if pr.eps is not None:
        ws.eps = pr.eps
    else:
        z = ws.precondition(b)
        zz = z @ b
        if zz > 0:
            curv = (z @ ws.hessian(z)) / zz
            ws.eps = pr.eps_rel * curv
    method = pr.method
    if method == "auto":
        method = "dense" if pr.simultaneous and ws.n_vars <= DENSE_LIMIT else "cr"
    if method == "dense":
        return _dense_solve(ws, b)
    if method not in ("cr", "cg"):
        raise ValueError(f"unknown method {pr.method!r}")
    solver = _conjugate_residual if method == "cr" else _conjugate_gradient
    x, hist, conv, it = solver(ws.hessian, b, ws.precondition, pr.tol, pr.max_iter)
    if not conv:
        log.warning("Krylov iteration stopped after %d iterations at relative gradient %.3e",
                    it, hist[-1] / hist[0] if hist[0] else 0.0)
    return x, hist, conv, it


def _dense_solve(ws: _Workspace, b: np.ndarray):
    # (H + 2 eps G) x = b with the Hessian assembled column by column in
    # batches; the history records the preconditioned residual before and after
    H = ws.hessian_matrix()
    G = ws.gram_matrix()
    A = H + 2.0 * ws.eps * G
    x = np.linalg.solve(A, b)
    r = b - A @ x
    hist = [float(np.sqrt(max(b @ ws.precondition(b), 0.0))),
            float(np.sqrt(max(r @ ws.precondition(r), 0.0)))]
    return x, hist, True, 1


def _tracking_reference(p: TimeSignal, yL: TimeSignal, window) -> float:
    ref = norm_L2(p, window)
    if ref == 0.0:
        ref = norm_L2(yL)
    return ref


def _solve(problem: ControlProblem) -> ControlSolution:
    ws = _Workspace(problem)
    x, hist, conv, it = _minimize(ws)
    S, psi0, psi1 = ws.unpack(x)
    s, u = ws.adjoint(x)
    u_sig = TimeSignal(u, problem.grid.dt)
    if problem.filter_cutoff is not None and problem.filter_control:
        u_sig = lowpass(u_sig, problem.filter_cutoff)
    J = ws.value(x)
    verify = forward_solve(problem.profile, problem.grid, problem.y0, problem.y1, u_sig, op=ws.op)
    yL = verify.trace_yL
    win = problem.window
    err = norm_L2(yL - problem.p, win)
    ref = _tracking_reference(problem.p, yL, win)
    tracking = err / ref if ref > 0 else err
    final = None
    if problem.simultaneous:
        yT, vT = verify.final_state
        z0 = np.zeros(problem.grid.Nx + 1) if problem.z0 is None else np.asarray(problem.z0, float)
        z1 = np.zeros(problem.grid.Nx + 1) if problem.z1 is None else np.asarray(problem.z1, float)
        e0 = h1_space_norm(ws.op, yT - z0, ws.L)
        e1 = l2_space_norm(ws.op, vT - z1)
        n0 = h1_space_norm(ws.op, z0, ws.L)
        n1 = l2_space_norm(ws.op, z1)
        comb_ref = np.hypot(n0, n1)
        final = {
            "position_H1": e0 / n0 if n0 > 0 else e0,
            "velocity_L2": e1 / n1 if n1 > 0 else e1,
            "energy": float(np.hypot(e0, e1) / comb_ref) if comb_ref > 0 else float(np.hypot(e0, e1)),
        }
    src = ws.smap.source(S)
    return ControlSolution(
        u=u_sig,
        s_opt=src,
        J_value=J,
        tracking_residual=float(tracking),
        final_residual=final,
        iterations=it,
        gradient_norm_history=hist,
        converged=conv,
        yL=yL,
        p=problem.p,
        eps=ws.eps,
        filter_cutoff=problem.filter_cutoff,
        terminal=None if psi0 is None else (psi0, psi1),
        diagnostics={"window": list(problem.window), "beta": problem.beta},
    )


def solve_sidewise(problem: ControlProblem) -> ControlSolution:
    """Control u on (0, T) with y(L, t) = p(t) on (L beta, T)."""
    if problem.simultaneous:
        raise ValueError("problem carries terminal targets; use solve_simultaneous")
    return _solve(problem)


def solve_simultaneous(problem: ControlProblem) -> ControlSolution:
    """Control reaching y(L, .) = p on (L beta, T - L beta) and (z0, z1) at t = T."""
    if not problem.simultaneous:
        raise ValueError("solve_simultaneous needs terminal targets z0, z1")
    return _solve(problem)


def write_control_csv(path, sol: ControlSolution) -> None:
    t = sol.u.t
    data = np.column_stack([t, sol.u.samples, sol.yL.samples, sol.p.samples])
    np.savetxt(path, data, delimiter=",", header="t,u,y_L,p", comments="", fmt="%.17g")
