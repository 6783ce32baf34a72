"""Observability constants, Ingham Gram matrices and the interior-source counterexample.

Observability constants are sup-quotients ||source|| / ||trace||.  The
discrete problem always has near-null high-frequency sources (slow spurious
waves that never reach the boundary in time), so the supremum over the full
grid space diverges under refinement for reasons unrelated to the continuum
inequality.  The estimates here are Rayleigh-Ritz values over a band-limited
source subspace whose cutoff is fixed in physical units: each value is the
exact supremum over that subspace, hence a certified lower bound on the
continuum constant, and it converges as the grid is refined.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import mpmath
import numpy as np
from scipy.linalg import eigh, solve_banded

from .coeffs import CoefficientProfile, Grid, compute_beta
from .fdsolver import (
    WaveOperator,
    adjoint_solve,
    backward_solve,
    discrete_residual,
    pointwise_adjoint_solve,
    snap_to_node,
)
from .hum import hminus_space_norm, l2_space_norm
from .signals import (
    SourceHminus,
    TimeSignal,
    hminus_norm_samples,
    norm_L2,
    trapezoid_weights,
    window_nodes,
)
from .spectral import eigensolve

NO_EVIDENCE = "no observability evidence"
UNBOUNDED = 1e8


@dataclass
class ObservabilityReport:
    constant_estimate: float
    window: tuple[float, float]
    norms: tuple[str, str]
    sample_count: int
    refinement: dict = field(default_factory=dict)
    subspace_trend: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def observable(self) -> bool:
        return NO_EVIDENCE not in self.flags

    def refinement_ratio(self) -> float:
        """max / min of the refinement table (inf if any entry is unbounded)."""
        vals = np.array(list(self.refinement.values()), dtype=float)
        if vals.size == 0:
            return 1.0
        if not np.all(np.isfinite(vals)) or vals.min() <= 0:
            return float("inf")
        return float(vals.max() / vals.min())


# --------------------------------------------------------------------------
# Gram matrices of source families and traces


def _sine_sources(grid: Grid, window, n_modes: int) -> np.ndarray:
    """Columns sin(j pi (t - lo) / len) on the window nodes, zero elsewhere."""
    lo, hi = window
    t = grid.t
    tau = (t - lo) / (hi - lo)
    inside = (tau > 0) & (tau < 1)
    j = np.arange(1, n_modes + 1)
    out = np.sin(np.pi * np.outer(tau, j))
    out[~inside] = 0.0
    return out


def _hminus_gram(grid: Grid, src: np.ndarray, window) -> np.ndarray:
    """Gram matrix of the window H^-1 norm: dt s^T A^-1 s on interior window nodes."""
    idx = window_nodes(grid.t, window, grid.dt)
    inner = src[idx[1:-1]]
    m = inner.shape[0]
    h = grid.dt
    ab = np.empty((3, m))
    ab[0, :] = -1.0 / h**2
    ab[1, :] = 2.0 / h**2
    ab[2, :] = -1.0 / h**2
    v = solve_banded((1, 1), ab, inner)
    return h * inner.T @ v


def _l2_gram(grid: Grid, sig: np.ndarray, window=None) -> np.ndarray:
    w = trapezoid_weights(grid.Nt + 1, grid.dt)
    if window is not None:
        mask = np.zeros_like(w)
        idx = window_nodes(grid.t, window, grid.dt)
        mask[idx] = 1.0
        # end weights of the sub-window are halved like the full trapezoid rule
        mask[idx[0]] = mask[idx[-1]] = 0.5
        w = np.full_like(w, grid.dt) * mask
    return sig.T @ (w[:, None] * sig)


def _h1_gram(grid: Grid, sig: np.ndarray) -> np.ndarray:
    d = np.diff(sig, axis=0) / grid.dt
    return _l2_gram(grid, sig) + grid.dt * d.T @ d


def _source_gram(grid: Grid, src: np.ndarray, window, tag: str) -> np.ndarray:
    if tag == "H-1":
        return _hminus_gram(grid, src, window)
    if tag == "L2":
        return _l2_gram(grid, src, window)
    raise ValueError(f"unknown source norm {tag!r}")


def _trace_gram(grid: Grid, tr: np.ndarray, tag: str) -> np.ndarray:
    if tag == "L2":
        return _l2_gram(grid, tr)
    if tag == "H1":
        return _h1_gram(grid, tr)
    raise ValueError(f"unknown trace norm {tag!r}")


def _sup_quotient(GX: np.ndarray, GY: np.ndarray) -> float:
    """sqrt(sup x^T GX x / x^T GY x) = 1 / sqrt(min eig of (GY, GX))."""
    GX = 0.5 * (GX + GX.T)
    GY = 0.5 * (GY + GY.T)
    lam = eigh(GY, GX, eigvals_only=True)
    lo = lam[0]
    if lo <= 1e-14 * max(lam[-1], 1e-300):
        return float("inf")
    return float(1.0 / np.sqrt(lo))


def _default_window(profile: CoefficientProfile, T: float):
    Lb = profile.L * compute_beta(profile)
    if T > Lb:
        return (Lb, T), None
    return (0.0, T), f"T={T} <= L beta={Lb}: empty observation window, sources placed on (0, T)"


# --------------------------------------------------------------------------
# Prop.-type estimate: s at x = L observed through psi(0, .)


def observability_quotient(profile, grid, s, window=None, norm_pair=("H-1", "L2")) -> float:
    """One-shot quotient ||s||_X / ||psi_s(0, .)||_Y for a single source."""
    window = window or _default_window(profile, grid.T)[0]
    samples = s.s.samples if isinstance(s, SourceHminus) else np.asarray(
        s.samples if isinstance(s, TimeSignal) else s, dtype=float)
    res = adjoint_solve(profile, grid, samples)
    tr = res.trace_psi0.samples
    num = _source_gram(grid, samples[:, None], window, norm_pair[0])[0, 0]
    den = _trace_gram(grid, tr[:, None], norm_pair[1])[0, 0]
    if den <= 0:
        return float("inf")
    return float(np.sqrt(max(num, 0.0) / den))


def _estimate_on_grid(profile, grid, window, norm_pair, n_modes) -> float:
    src = _sine_sources(grid, window, n_modes)
    res = adjoint_solve(profile, grid, src)
    tr = res.trace_psi0
    return _sup_quotient(_source_gram(grid, src, window, norm_pair[0]), _trace_gram(grid, tr, norm_pair[1]))


def estimate_observability(
    profile: CoefficientProfile,
    grid: Grid,
    window=None,
    norm_pair: tuple[str, str] = ("H-1", "L2"),
    n_modes: int = 24,
    refine: Optional[Sequence[int]] = None,
) -> ObservabilityReport:
    """Best constant C in ||s||_X <= C ||psi(0, .)||_Y over a band-limited source family.

    ``norm_pair`` is ("H-1", "L2") for the H^-1 / L^2 inequality or
    ("L2", "H1") for its shifted variant.  Sources are the first ``n_modes``
    Dirichlet sine modes of the window.  ``refine`` lists grid sizes Nx for
    the refinement table (the given grid is always included).
    """
    notes = []
    if window is None:
        window, note = _default_window(profile, grid.T)
        if note:
            notes.append(note)
    window = (float(window[0]), float(window[1]))
    est = _estimate_on_grid(profile, grid, window, norm_pair, n_modes)
    trend = {}
    for m in sorted({max(1, n_modes // 4), max(1, n_modes // 2), n_modes}):
        trend[m] = est if m == n_modes else _estimate_on_grid(profile, grid, window, norm_pair, m)
    table = {grid.Nx: est}
    for nx in refine or ():
        if nx == grid.Nx:
            continue
        g = Grid.for_profile(profile, grid.T, nx)
        table[nx] = _estimate_on_grid(profile, g, window, norm_pair, n_modes)
    table = dict(sorted(table.items()))
    rep = ObservabilityReport(
        constant_estimate=est,
        window=window,
        norms=tuple(norm_pair),
        sample_count=n_modes,
        refinement=table,
        subspace_trend=trend,
        notes=notes,
    )
    vals = np.array(list(table.values()))
    if not np.all(np.isfinite(vals)) or vals.max() > UNBOUNDED or rep.refinement_ratio() > 2.0:
        rep.flags.append(NO_EVIDENCE)
    return rep


# --------------------------------------------------------------------------
# two-step inequality with terminal data


@dataclass
class TwoStepReport:
    s_hminus: float
    psi0_l2: float
    psi1_hminus: float
    trace_l2: float
    step1_quotient: float
    full_quotient: float
    energy_drift: float
    energy_window: tuple[float, float]


def verify_two_step(profile: CoefficientProfile, grid: Grid, s, terminal=None) -> TwoStepReport:
    """Evaluate both sides of the simultaneous inequality for one instance.

    ||s||_{H^-1(L beta, T - L beta)} + ||psi0||_{L^2} + ||psi1||_{H^-1}  vs  ||psi(0, .)||_{L^2(0, T)},
    plus the relative drift of the discrete energy over (T - L beta, T),
    where s vanishes and the scheme is conservative.
    """
    beta = compute_beta(profile)
    Lb = profile.L * beta
    T = grid.T
    if T <= 2 * Lb:
        raise ValueError(f"T={T} <= 2 L beta = {2 * Lb}")
    win = (Lb, T - Lb)
    if isinstance(s, SourceHminus):
        src = s
    else:
        samples = np.asarray(s.samples if isinstance(s, TimeSignal) else s, dtype=float)
        src = SourceHminus.from_rate(samples, grid.dt, win)
    src = SourceHminus(src.S, win)
    if src.support_violation() > 1e-12:
        raise ValueError(f"source support leaves {win}")
    op = WaveOperator.build(profile, grid)
    res = adjoint_solve(profile, grid, src, terminal, record_energy=True, op=op)
    s_norm = hminus_norm_samples(src.s.samples, grid.dt, *_window_ends(grid, win))
    if terminal is None:
        p0_n = p1_n = 0.0
    else:
        p0_n = l2_space_norm(op, np.asarray(terminal[0], dtype=float))
        p1_n = hminus_space_norm(op, np.asarray(terminal[1], dtype=float), profile.L)
    tr = norm_L2(res.trace_psi0)
    energy = res.energy
    # energy[n] lives between levels n and n+1 (forward time); keep steps inside (T - L beta, T)
    n0 = int(np.ceil((T - Lb) / grid.dt - 1e-9))
    seg = energy[n0:]
    ref = max(abs(seg[-1]), 1e-300)
    drift = float(np.max(np.abs(seg - seg[-1])) / ref) if seg.size else 0.0
    q1 = s_norm / tr if tr > 0 else float("inf")
    qf = (s_norm + p0_n + p1_n) / tr if tr > 0 else float("inf")
    return TwoStepReport(s_norm, p0_n, p1_n, tr, q1, qf, drift, (T - Lb, T))


def _window_ends(grid: Grid, window) -> tuple[int, int]:
    idx = window_nodes(grid.t, window, grid.dt)
    return int(idx[0]), int(idx[-1])


def _two_step_on_grid(profile, grid, n_modes, n_terminal) -> float:
    Lb = profile.L * compute_beta(profile)
    win = (Lb, grid.T - Lb)
    op = WaveOperator.build(profile, grid)
    src = _sine_sources(grid, win, n_modes)
    tr_s = adjoint_solve(profile, grid, src, op=op).trace_psi0
    pairs = eigensolve(profile, grid, n_terminal)
    W = np.column_stack([p.w for p in pairs])
    lam = np.array([p.lam for p in pairs])
    zeros = np.zeros((grid.Nt + 1, n_terminal))
    tr_0 = backward_solve(profile, grid, {grid.Nx: zeros}, (W, np.zeros_like(W)), op=op).trace_psi0
    tr_1 = backward_solve(profile, grid, {grid.Nx: zeros}, (np.zeros_like(W), W), op=op).trace_psi0
    tr = np.hstack([tr_s, tr_0, tr_1])
    GX = np.zeros((tr.shape[1],) * 2)
    ns = n_modes
    GX[:ns, :ns] = _hminus_gram(grid, src, win)
    # mass-orthonormal eigenvectors: L^2 Gram is the identity, H^-1 Gram is diagonal
    GX[ns : ns + n_terminal, ns : ns + n_terminal] = np.eye(n_terminal)
    GX[ns + n_terminal :, ns + n_terminal :] = np.diag(1.0 / (lam + 1.0 / profile.L**2))
    return _sup_quotient(GX, _l2_gram(grid, tr))


def estimate_two_step(
    profile: CoefficientProfile,
    grid: Grid,
    n_modes: int = 12,
    n_terminal: int = 12,
    refine: Optional[Sequence[int]] = None,
) -> ObservabilityReport:
    """Constant of the simultaneous inequality over sine sources and low eigenmodes.

    The left side is taken in the Hilbert form (sum of squares), which is
    within a factor sqrt(3) of the sum of the three norms.
    """
    Lb = profile.L * compute_beta(profile)
    if grid.T <= 2 * Lb:
        raise ValueError(f"T={grid.T} <= 2 L beta = {2 * Lb}")
    est = _two_step_on_grid(profile, grid, n_modes, n_terminal)
    table = {grid.Nx: est}
    for nx in refine or ():
        if nx != grid.Nx:
            table[nx] = _two_step_on_grid(profile, Grid.for_profile(profile, grid.T, nx), n_modes, n_terminal)
    table = dict(sorted(table.items()))
    rep = ObservabilityReport(
        constant_estimate=est,
        window=(Lb, grid.T - Lb),
        norms=("H-1+L2+H-1", "L2"),
        sample_count=n_modes + 2 * n_terminal,
        refinement=table,
    )
    if not np.isfinite(est) or rep.refinement_ratio() > 2.0:
        rep.flags.append(NO_EVIDENCE)
    return rep


# --------------------------------------------------------------------------
# Ingham inequality


@dataclass
class InghamSpectrum:
    frequencies: np.ndarray
    T: float

    def __post_init__(self):
        lam = np.sort(np.asarray(self.frequencies, dtype=float))
        if lam.size == 0:
            raise ValueError("empty frequency family")
        if lam.size > 1 and np.min(np.diff(lam)) <= 0:
            raise ValueError("duplicate frequencies: the gap condition needs distinct values")
        self.frequencies = lam

    @property
    def gap(self) -> float:
        lam = self.frequencies
        return float(np.min(np.diff(lam))) if lam.size > 1 else float("inf")

    @property
    def critical_time(self) -> float:
        return float(np.pi / self.gap)

    @classmethod
    def integers(cls, M: int, T: float) -> "InghamSpectrum":
        return cls(np.arange(-M, M + 1, dtype=float), T)

    @classmethod
    def plate(cls, M: int, T: float) -> "InghamSpectrum":
        n = np.arange(-M, M + 1, dtype=float)
        return cls(np.sign(n) * n**2, T)

    def shifted(self, mu: float) -> "InghamSpectrum":
        return InghamSpectrum(self.frequencies + mu, self.T)

    def scaled(self, c: float) -> "InghamSpectrum":
        return InghamSpectrum(self.frequencies * c, self.T)

    def with_T(self, T: float) -> "InghamSpectrum":
        return InghamSpectrum(self.frequencies, T)

    def select(self, N: int) -> np.ndarray:
        """2N+1 consecutive frequencies centred on the middle of the family."""
        lam = self.frequencies
        c = lam.size // 2
        if c - N < 0 or c + N >= lam.size:
            raise ValueError(f"family of {lam.size} frequencies cannot supply 2N+1 = {2 * N + 1}")
        return lam[c - N : c + N + 1]


def gram_matrix(lam: np.ndarray, T: float) -> np.ndarray:
    """G_mn = int_{-T}^{T} exp(i (lam_m - lam_n) t) dt = 2 sin((lam_m - lam_n) T) / (lam_m - lam_n)."""
    d = lam[:, None] - lam[None, :]
    G = np.full(d.shape, 2.0 * T)
    off = d != 0
    G[off] = 2.0 * np.sin(d[off] * T) / d[off]
    return G


def _gram_extremes_mp(lam: np.ndarray, T: float, dps: int) -> tuple[float, float]:
    with mpmath.workdps(dps):
        lm = [mpmath.mpf(float(v)) for v in lam]
        Tm = mpmath.mpf(float(T))
        n = len(lm)
        G = mpmath.matrix(n, n)
        for i in range(n):
            G[i, i] = 2 * Tm
            for j in range(i):
                d = lm[i] - lm[j]
                G[i, j] = G[j, i] = 2 * mpmath.sin(d * Tm) / d
        ev = mpmath.eigsy(G, eigvals_only=True)
        return float(min(ev)), float(max(ev))


def ingham_constants(spectrum: InghamSpectrum, N: int, max_dps: int = 640) -> tuple[float, float]:
    """Extreme eigenvalues (C1, C2) of the Gram matrix of 2N+1 central frequencies.

    Below the critical time the lower eigenvalue falls under double
    precision roundoff; it is then recomputed in extended precision,
    doubling the working digits until it clears the roundoff floor.
    """
    lam = spectrum.select(N)
    ev = np.linalg.eigvalsh(gram_matrix(lam, spectrum.T))
    c1, c2 = float(ev[0]), float(ev[-1])
    if c1 > 1e-10 * c2:
        return c1, c2
    dps = 40
    while dps <= max_dps:
        c1, c2 = _gram_extremes_mp(lam, spectrum.T, dps)
        if c1 > 10.0 ** (15 - dps) * c2:
            return c1, c2
        dps *= 2
    return c1, c2


def ingham_time_sweep(
    spectrum: InghamSpectrum,
    N: Sequence[int] | int,
    T_list: Iterable[float],
    ratio_threshold: float = 0.5,
) -> list[dict]:
    """Rows (T, N, C1, C2, C2/C1) plus, per T, whether C1 survives the larger N.

    With two values of N the lower constant is called stable at T when
    C1(N_large) >= ratio_threshold * C1(N_small).
    """
    Ns = [N] if np.isscalar(N) else list(N)
    rows = []
    for T in T_list:
        sp = spectrum.with_T(T)
        c1s = []
        for n in Ns:
            c1, c2 = ingham_constants(sp, n)
            c1s.append(c1)
            rows.append({"T": float(T), "N": int(n), "C1": c1, "C2": c2,
                         "ratio": c2 / c1 if c1 > 0 else float("inf")})
        if len(Ns) > 1:
            stable = c1s[-1] >= ratio_threshold * c1s[0]
            for r in rows[-len(Ns):]:
                r["stable"] = bool(stable)
    return rows


def transition_bracket(rows: list[dict]) -> Optional[tuple[float, float]]:
    """Consecutive sweep times between which C1 switches from decaying to stable."""
    seen = {}
    for r in rows:
        if "stable" in r:
            seen[r["T"]] = r["stable"]
    Ts = sorted(seen)
    for a, b in zip(Ts[:-1], Ts[1:]):
        if not seen[a] and seen[b]:
            return (a, b)
    return None


def write_ingham_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["T", "N", "C1", "C2"])
        for r in rows:
            wr.writerow([f"{r['T']:.17g}", r["N"], f"{r['C1']:.17g}", f"{r['C2']:.17g}"])


def write_refinement_csv(path, report: ObservabilityReport) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["Nx", "estimate"])
        for nx, est in report.refinement.items():
            wr.writerow([nx, f"{est:.17g}"])


# --------------------------------------------------------------------------
# counterexample: interior point source invisible at x = 0


@dataclass
class Counterexample:
    grid: Grid
    x0: float
    j0: int
    field: np.ndarray
    s: TimeSignal
    trace_psi0: TimeSignal
    trace_psiL: TimeSignal
    residual_error: float
    notes: list = field(default_factory=list)

    def source(self) -> SourceHminus:
        return SourceHminus.from_rate(self.s.samples, self.grid.dt, (0.0, self.grid.T))

    def s_hminus(self, window=None) -> float:
        win = window or (0.0, self.grid.T)
        return hminus_norm_samples(self.s.samples, self.grid.dt, *_window_ends(self.grid, win))


def build_counterexample(
    profile: CoefficientProfile,
    grid: Grid,
    x0: float,
    mode_or_data=1,
) -> Counterexample:
    """psi = 0 on [0, x0], a free solution on [x0, L] pinned at x0, glued.

    ``mode_or_data`` is either an integer k, selecting the terminal profile
    sin(omega (x - x0)) with omega = pi (k - 1/2) / (L - x0) and zero
    velocity, or a pair (psi0, psi1) of nodal terminal data (values at and
    left of x0 are ignored).  The right piece uses a Dirichlet condition at
    x0, which keeps the glued field continuous; the source is then the flux
    jump s = -a(x0+) psi_x(x0+), i.e. -a_face[j0] psi[j0+1] / dx on the grid.
    """
    j0, note = snap_to_node(grid, x0)
    x0n = j0 * grid.dx
    x = grid.x
    if isinstance(mode_or_data, (int, np.integer)):
        k = int(mode_or_data)
        if k < 1:
            raise ValueError("mode index must be >= 1")
        om = np.pi * (k - 0.5) / (profile.L - x0n)
        psi0 = np.where(x > x0n, np.sin(om * (x - x0n)), 0.0)
        psi1 = np.zeros_like(x)
    else:
        psi0, psi1 = (np.asarray(v, dtype=float).copy() for v in mode_or_data)
    psi0[: j0 + 1] = 0.0
    psi1[: j0 + 1] = 0.0
    if not (np.any(psi0) or np.any(psi1)):
        raise ValueError("right-piece data are trivial; the source would vanish")
    op = WaveOperator.build(profile, grid)
    pinned = np.arange(j0 + 1)
    res = backward_solve(profile, grid, {}, (psi0, psi1), record=True, pinned=pinned, op=op)
    hist = res.field
    s = -op.a_face[j0] * hist[:, j0 + 1] / grid.dx
    # the glued field must solve the point-source scheme with load s at j0
    F = discrete_residual(op, hist, grid.dt)
    load = np.zeros_like(F)
    load[:, j0] = s[1:-1]
    scale = max(np.abs(s).max(), 1e-300)
    err = float(np.abs(F - load).max() / scale)
    notes = [note] if note else []
    return Counterexample(
        grid=grid,
        x0=x0n,
        j0=j0,
        field=hist,
        s=TimeSignal(s, grid.dt),
        trace_psi0=TimeSignal(hist[:, 0].copy(), grid.dt),
        trace_psiL=TimeSignal(hist[:, -1].copy(), grid.dt),
        residual_error=err,
        notes=notes,
    )


def _two_sided_window(profile, grid, x0):
    beta = compute_beta(profile)
    M = max(x0, profile.L - x0)
    if grid.T <= 2 * M * beta:
        raise ValueError(f"T={grid.T} <= 2 M(x0) beta = {2 * M * beta}")
    return (M * beta, grid.T - M * beta)


def _band_limited_family(grid, window, n_samples, n_modes, seed) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    basis = _sine_sources(grid, window, n_modes)
    coef = rng.standard_normal((n_modes, n_samples)) / np.arange(1, n_modes + 1)[:, None]
    return basis @ coef


def two_sided_quotients(profile, grid, x0, src: np.ndarray, window) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (two-sided, one-sided) quotients ||s||_H-1 / trace norms."""
    src2 = src if src.ndim == 2 else src[:, None]
    res = pointwise_adjoint_solve(profile, grid, src2, x0)
    tr0, trL = res.trace_psi0, res.trace_psiL
    a, b = _window_ends(grid, window)
    num = np.array([hminus_norm_samples(src2[:, i], grid.dt, a, b) for i in range(src2.shape[1])])
    n0 = np.sqrt(np.diag(_l2_gram(grid, tr0)))
    nL = np.sqrt(np.diag(_l2_gram(grid, trL)))
    with np.errstate(divide="ignore"):
        two = np.where(n0 + nL > 0, num / (n0 + nL), np.inf)
        one = np.where(n0 > 0, num / n0, np.inf)
    return two, one


def two_sided_observability(
    profile: CoefficientProfile,
    grid: Grid,
    x0: float,
    s=None,
    n_samples: int = 16,
    n_modes: int = 12,
    seed: int = 0,
    refine: Optional[Sequence[int]] = None,
) -> ObservabilityReport:
    """Quotient ||s||_{H^-1} / (||psi(0, .)|| + ||psi(L, .)||) for a point source at x0.

    Without ``s`` a seeded family of band-limited sources on the window
    (M beta, T - M beta), M = max(x0, L - x0), is drawn (PCG64) and the
    largest quotient reported.  The notes record the one-sided quotient
    (trace at x = 0 only) for comparison.
    """
    window = _two_sided_window(profile, grid, x0)

    def on_grid(g):
        if s is None:
            src = _band_limited_family(g, window, n_samples, n_modes, seed)
        else:
            src = np.asarray(s(g.t) if callable(s) else s, dtype=float)
        two, one = two_sided_quotients(profile, g, x0, src, window)
        return float(np.max(two)), float(np.max(one))

    est, one = on_grid(grid)
    table = {grid.Nx: est}
    for nx in refine or ():
        if nx != grid.Nx:
            table[nx] = on_grid(Grid.for_profile(profile, grid.T, nx))[0]
    table = dict(sorted(table.items()))
    rep = ObservabilityReport(
        constant_estimate=est,
        window=window,
        norms=("H-1", "L2(0)+L2(L)"),
        sample_count=n_samples if s is None else 1,
        refinement=table,
        notes=[f"one-sided quotient (x=0 trace only): {one:.6g}"],
    )
    if not np.isfinite(est) or rep.refinement_ratio() > 2.0:
        rep.flags.append(NO_EVIDENCE)
    return rep


def counterexample_quotients(cx: Counterexample, profile: CoefficientProfile) -> tuple[float, float]:
    """(one-sided, two-sided) quotients of the counterexample field."""
    num = cx.s_hminus()
    n0 = norm_L2(cx.trace_psi0)
    nL = norm_L2(cx.trace_psiL)
    one = num / n0 if n0 > 0 else float("inf")
    two = num / (n0 + nL) if n0 + nL > 0 else float("inf")
    return one, two
