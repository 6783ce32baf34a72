"""Explicit leapfrog solver for rho y_tt = (a y_x)_x with boundary and point loads.

Space is discretized on nodes ``x_j = j dx`` with a lumped mass
``M_j = rho_j * dx`` (halved at the two end nodes) and an interval stiffness
``a_face[j] / dx``.  The semi-discrete system is

    M y'' = -K y + F(t),

where Neumann data enter ``F`` at the end nodes.  This is the ghost-point
closure ``y_{-1} = y_1 - 2 dx u`` written for the half cell at the boundary;
the boundary flux uses the one-sided coefficient ``a(0+)`` (resp. ``a(L-)``).

Time stepping is the symmetric leapfrog with a Taylor start
``y^1 = y^0 + dt v^0 + dt^2/2 M^{-1}(-K y^0 + F^0)``.  Backward (adjoint)
problems run the same integrator in reversed time.  Because the scheme,
its start step and the end-velocity formula are all time symmetric, the
discrete forward and adjoint maps are exact transposes of each other in the
trapezoidal time inner product.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping, Optional

import numpy as np

from .coeffs import CoefficientProfile, Grid, check_cfl, compute_beta, sample_on_grid
from .signals import SourceHminus, TimeSignal, _window_integral

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Non-finite state encountered during time stepping."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass
class WaveOperator:
    mass: np.ndarray
    a_face: np.ndarray
    dx: float

    @classmethod
    def build(cls, profile: CoefficientProfile, grid: Grid) -> "WaveOperator":
        rho, a_face = sample_on_grid(profile, grid)
        mass = rho * grid.dx
        mass[0] *= 0.5
        mass[-1] *= 0.5
        return cls(mass, a_face, grid.dx)

    def minus_stiffness(self, y: np.ndarray) -> np.ndarray:
        """-K y for y of shape (Nx+1,) or (Nx+1, B)."""
        c = self.a_face / self.dx
        if y.ndim == 2:
            c = c[:, None]
        q = c * (y[1:] - y[:-1])
        r = np.zeros_like(y)
        r[:-1] += q
        r[1:] -= q
        return r

    def energy(self, y_old: np.ndarray, y_new: np.ndarray, dt: float) -> np.ndarray:
        """Conserved leapfrog energy between two consecutive levels."""
        v = (y_new - y_old) / dt
        c = self.a_face / self.dx
        if y_old.ndim == 2:
            m = self.mass[:, None]
            c = c[:, None]
        else:
            m = self.mass
        kin = 0.5 * np.sum(m * v * v, axis=0)
        pot = 0.5 * np.sum(c * np.diff(y_new, axis=0) * np.diff(y_old, axis=0), axis=0)
        return kin + pot


@dataclass
class WaveField:
    """Two consecutive time levels plus the index of the newer one."""

    prev: np.ndarray
    cur: np.ndarray
    step: int


@dataclass
class StepResult:
    traces: dict[int, np.ndarray]
    final: np.ndarray
    final_velocity: np.ndarray
    history: Optional[np.ndarray] = None
    energy: Optional[np.ndarray] = None
    last: Optional[WaveField] = None


def leapfrog(
    op: WaveOperator,
    dt: float,
    nsteps: int,
    y0: np.ndarray,
    v0: np.ndarray,
    loads: Mapping[int, np.ndarray] | None = None,
    trace_nodes=(0, -1),
    pinned: Optional[np.ndarray] = None,
    record: bool = False,
    record_energy: bool = False,
    check_every: int = 64,
) -> StepResult:
    """Integrate M y'' = -K y + F forward over ``nsteps`` steps.

    ``loads`` maps a node index to the load samples at the ``nsteps + 1``
    time levels (shape (nsteps+1,) or (nsteps+1, B) for batches).  ``pinned``
    nodes are held at zero.
    """
    y0 = np.asarray(y0, dtype=float)
    batched = y0.ndim == 2
    loads = loads or {}
    inv_m = 1.0 / op.mass
    if batched:
        inv_m = inv_m[:, None]
    nnode = op.mass.size
    trace_nodes = [n % nnode for n in trace_nodes]

    def accel(y, n):
        r = op.minus_stiffness(y)
        for node, samples in loads.items():
            r[node] += samples[n]
        return r * inv_m

    traces = {j: np.empty((nsteps + 1,) + y0.shape[1:]) for j in trace_nodes}
    history = np.empty((nsteps + 1,) + y0.shape) if record else None
    energy = np.empty(nsteps) if (record_energy and not batched) else None

    prev = y0.copy()
    if pinned is not None:
        prev[pinned] = 0.0
    cur = prev + dt * v0 + 0.5 * dt * dt * accel(prev, 0)
    if pinned is not None:
        cur[pinned] = 0.0

    def store(n, y):
        for j in trace_nodes:
            traces[j][n] = y[j]
        if history is not None:
            history[n] = y

    store(0, prev)
    store(1, cur)
    if energy is not None:
        energy[0] = op.energy(prev, cur, dt)
    dt2 = dt * dt
    for n in range(1, nsteps):
        nxt = 2.0 * cur - prev + dt2 * accel(cur, n)
        if pinned is not None:
            nxt[pinned] = 0.0
        prev, cur = cur, nxt
        store(n + 1, cur)
        if energy is not None:
            energy[n] = op.energy(prev, cur, dt)
        if n % check_every == 0 and not np.all(np.isfinite(cur)):
            raise SolverError(f"non-finite state at step {n + 1}", n + 1)
    if not np.all(np.isfinite(cur)):
        raise SolverError(f"non-finite state at step {nsteps}", nsteps)
    vel = (cur - prev) / dt + 0.5 * dt * accel(cur, nsteps)
    if pinned is not None:
        vel[pinned] = 0.0
    return StepResult(traces, cur, vel, history, energy, WaveField(prev, cur, nsteps))


def _nodal(data, grid: Grid) -> np.ndarray:
    if data is None:
        return np.zeros(grid.Nx + 1)
    if callable(data):
        return np.asarray(data(grid.x), dtype=float) * np.ones(grid.Nx + 1)
    arr = np.asarray(data, dtype=float)
    if arr.shape[0] != grid.Nx + 1:
        raise ValueError(f"nodal data has {arr.shape[0]} values, grid has {grid.Nx + 1} nodes")
    return arr


def _samples(sig, grid: Grid) -> np.ndarray:
    if sig is None:
        return np.zeros(grid.Nt + 1)
    if isinstance(sig, TimeSignal):
        arr = sig.samples
    elif isinstance(sig, SourceHminus):
        arr = sig.s.samples
    elif callable(sig):
        arr = np.asarray(sig(grid.t), dtype=float) * np.ones(grid.Nt + 1)
    else:
        arr = np.asarray(sig, dtype=float)
    if arr.shape[0] != grid.Nt + 1:
        raise ValueError(f"signal has {arr.shape[0]} samples, grid needs {grid.Nt + 1}")
    return arr


# --------------------------------------------------------------------------
# forward problem


@dataclass
class ForwardResult:
    trace_yL: TimeSignal
    trace_y0: TimeSignal
    final_state: tuple[np.ndarray, np.ndarray]
    field: Optional[np.ndarray] = None
    energy: Optional[np.ndarray] = None


def forward_solve(
    profile: CoefficientProfile,
    grid: Grid,
    y0=None,
    y1=None,
    u=None,
    record: bool = False,
    record_energy: bool = False,
    cfl_safety: float = 0.9,
    op: WaveOperator | None = None,
) -> ForwardResult:
    """State system with y_x(0, t) = u(t), y_x(L, t) = 0 and data (y0, y1) at t = 0."""
    check_cfl(profile, grid, cfl_safety)
    op = op or WaveOperator.build(profile, grid)
    u_s = _samples(u, grid)
    y0 = _nodal(y0, grid)
    y1 = _nodal(y1, grid)
    if u_s.ndim == 2:
        y0 = np.repeat(y0[:, None], u_s.shape[1], axis=1) if y0.ndim == 1 else y0
        y1 = np.repeat(y1[:, None], u_s.shape[1], axis=1) if y1.ndim == 1 else y1
    loads = {0: -profile.a0_plus * u_s}
    res = leapfrog(op, grid.dt, grid.Nt, y0, y1, loads, record=record, record_energy=record_energy)
    n_last = grid.Nx
    return ForwardResult(
        trace_yL=_to_signal(res.traces[n_last], grid),
        trace_y0=_to_signal(res.traces[0], grid),
        final_state=(res.final, res.final_velocity),
        field=res.history,
        energy=res.energy,
    )


def _to_signal(arr: np.ndarray, grid: Grid):
    if arr.ndim == 1:
        return TimeSignal(arr, grid.dt)
    return arr


# --------------------------------------------------------------------------
# backward (adjoint) problems


@dataclass
class AdjointResult:
    trace_psi0: TimeSignal
    trace_psiL: TimeSignal
    initial_state: tuple[np.ndarray, np.ndarray]
    field: Optional[np.ndarray] = None
    energy: Optional[np.ndarray] = None
    notes: list[str] = dc_field(default_factory=list)

    def state_at(self, grid: Grid, t: float) -> np.ndarray:
        if self.field is None:
            raise ValueError("solve was run without record=True")
        return self.field[int(round(t / grid.dt))]


def backward_solve(
    profile: CoefficientProfile,
    grid: Grid,
    loads: Mapping[int, np.ndarray],
    terminal=None,
    record: bool = False,
    record_energy: bool = False,
    pinned=None,
    cfl_safety: float = 0.9,
    op: WaveOperator | None = None,
) -> AdjointResult:
    """Run the wave equation backward from t = T with the given node loads.

    Loads are indexed by forward time level; the result is reported in
    forward time as well.
    """
    check_cfl(profile, grid, cfl_safety)
    op = op or WaveOperator.build(profile, grid)
    psi0, psi1 = (None, None) if terminal is None else terminal
    p0 = _nodal(psi0, grid)
    p1 = _nodal(psi1, grid)
    rev = {node: samples[::-1] for node, samples in loads.items()}
    batch = None
    for samples in loads.values():
        if samples.ndim == 2:
            batch = samples.shape[1]
    if batch is not None:
        p0 = np.repeat(p0[:, None], batch, axis=1) if p0.ndim == 1 else p0
        p1 = np.repeat(p1[:, None], batch, axis=1) if p1.ndim == 1 else p1
    res = leapfrog(
        op, grid.dt, grid.Nt, p0, -p1, rev, pinned=pinned, record=record, record_energy=record_energy
    )
    field_hist = res.history[::-1] if res.history is not None else None
    energy = res.energy[::-1] if res.energy is not None else None
    return AdjointResult(
        trace_psi0=_to_signal(res.traces[0][::-1].copy(), grid),
        trace_psiL=_to_signal(res.traces[grid.Nx][::-1].copy(), grid),
        initial_state=(res.final, -res.final_velocity),
        field=field_hist,
        energy=energy,
    )


def adjoint_solve(
    profile: CoefficientProfile,
    grid: Grid,
    s: SourceHminus | TimeSignal | np.ndarray | None,
    terminal=None,
    record: bool = False,
    record_energy: bool = False,
    cfl_safety: float = 0.9,
    op: WaveOperator | None = None,
) -> AdjointResult:
    """Backward system with psi_x(0, t) = 0, psi_x(L, t) = s(t), (psi, psi_t)(T) = terminal.

    The boundary datum enters through its nodal samples; a ``SourceHminus``
    contributes the centered differences of its antiderivative.
    """
    s_s = _samples(s, grid)
    loads = {grid.Nx: profile.aL_minus * s_s}
    return backward_solve(
        profile, grid, loads, terminal, record, record_energy, cfl_safety=cfl_safety, op=op
    )


def snap_to_node(grid: Grid, x0: float) -> tuple[int, Optional[str]]:
    j = grid.node_of(x0)
    j = min(max(j, 1), grid.Nx - 1)
    if abs(j * grid.dx - x0) > 1e-9 * grid.dx:
        msg = f"x0={x0} is not a grid node; snapped to x={j * grid.dx}"
        log.warning(msg)
        return j, msg
    return j, None


def pointwise_adjoint_solve(
    profile: CoefficientProfile,
    grid: Grid,
    s,
    x0: float,
    terminal=None,
    record: bool = False,
    cfl_safety: float = 0.9,
) -> AdjointResult:
    """Backward system with a point source s(t) delta_{x0} and homogeneous Neumann ends.

    The Dirac mass becomes a load of weight 1/dx at the node of ``x0`` (a unit
    nodal load in the lumped-mass form), which realizes the flux jump
    [a psi_x](x0) = -s.
    """
    j0, note = snap_to_node(grid, x0)
    s_s = _samples(s, grid)
    res = backward_solve(profile, grid, {j0: s_s}, terminal, record, cfl_safety=cfl_safety)
    if note:
        res.notes.append(note)
    return res


def discrete_residual(op: WaveOperator, field_hist: np.ndarray, dt: float) -> np.ndarray:
    """M (y^{n+1} - 2 y^n + y^{n-1}) / dt^2 + K y^n at interior time levels.

    For a solution of the scheme this equals the nodal load vector F^n.
    """
    d2 = (field_hist[2:] - 2 * field_hist[1:-1] + field_hist[:-2]) / dt**2
    out = np.empty_like(d2)
    for i in range(d2.shape[0]):
        out[i] = op.mass * d2[i] - op.minus_stiffness(field_hist[i + 1])
    return out


# --------------------------------------------------------------------------
# sidewise energy


def sidewise_energy(
    profile: CoefficientProfile,
    grid: Grid,
    field_history: np.ndarray,
    x: float,
    beta: float | None = None,
) -> float:
    """F(x) = 1/2 int_{beta x}^{T - beta x} [rho psi_t^2 + a psi_x^2] dt.

    ``field_history`` has shape (Nt+1, Nx+1).  ``x`` must be a node; psi_x uses
    centered differences inside and second-order one-sided differences at the
    ends, psi_t the same in time.  At a coefficient jump the right-hand
    values of rho and a are used (left-hand at x = L).
    """
    beta = compute_beta(profile) if beta is None else beta
    lo, hi = beta * x, grid.T - beta * x
    if hi <= lo:
        raise ValueError(f"empty sidewise window at x={x}: 2*beta*x >= T")
    j = grid.node_of(x)
    if abs(j * grid.dx - x) > 1e-9 * grid.dx:
        raise ValueError("sidewise_energy needs x on a grid node")
    psi = field_history[:, j]
    psi_t = np.gradient(psi, grid.dt, edge_order=2)
    psi_x = np.gradient(field_history, grid.dx, axis=1, edge_order=2)[:, j]
    side = "left" if j == grid.Nx else "right"
    rho = profile.rho(x, side)
    a = profile.a(x, side)
    dens = rho * psi_t**2 + a * psi_x**2
    return 0.5 * _window_integral(dens, grid.dt, 0.0, (lo, hi))


# --------------------------------------------------------------------------
# field dumps


def write_field_csv(path, grid: Grid, field_history: np.ndarray) -> None:
    """One row per time step: t, then node values x_0 ... x_Nx (17 significant digits)."""
    header = "t," + ",".join(f"x{j}" for j in range(grid.Nx + 1))
    data = np.column_stack([grid.t, field_history])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def write_field_npy(path, field_history: np.ndarray) -> None:
    """Binary dump: float64 array of shape (Nt+1, Nx+1), row n = time level n."""
    np.save(path, np.ascontiguousarray(field_history, dtype=np.float64))
