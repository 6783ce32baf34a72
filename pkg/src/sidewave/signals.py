"""Sampled time signals, H^-1 boundary sources and their norms.

All time integrals use the trapezoidal rule on the uniform time grid.
Windows that do not fall on nodes are handled by integrating the piecewise
linear interpolant of the integrand, which reduces to the plain trapezoidal
rule when the window ends are nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as spfft
from scipy.linalg import solve_banded


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


@dataclass
class TimeSignal:
    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("TimeSignal samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("TimeSignal contains non-finite samples")

    @classmethod
    def zeros(cls, n: int, dt: float) -> "TimeSignal":
        return cls(np.zeros(n), dt)

    @classmethod
    def from_function(cls, func, grid) -> "TimeSignal":
        return cls(np.asarray(func(grid.t), dtype=float) * np.ones(grid.Nt + 1), grid.dt)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def T_end(self) -> float:
        return self.t0 + self.dt * (self.samples.size - 1)

    def __add__(self, other: "TimeSignal") -> "TimeSignal":
        return replace(self, samples=self.samples + other.samples)

    def __sub__(self, other: "TimeSignal") -> "TimeSignal":
        return replace(self, samples=self.samples - other.samples)

    def __mul__(self, c: float) -> "TimeSignal":
        return replace(self, samples=self.samples * c)

    __rmul__ = __mul__

    def masked(self, window) -> "TimeSignal":
        """Copy with samples outside the closed window set to zero."""
        lo, hi = window
        t = self.t
        keep = (t >= lo - 1e-12 * self.dt) & (t <= hi + 1e-12 * self.dt)
        return replace(self, samples=np.where(keep, self.samples, 0.0))


def _window_integral(values: np.ndarray, dt: float, t0: float, window) -> float:
    """Integral over the window of the piecewise linear interpolant of ``values``."""
    n = values.size
    t_end = t0 + dt * (n - 1)
    lo, hi = (t0, t_end) if window is None else window
    tol = 1e-9 * dt
    if lo < t0 - tol or hi > t_end + tol:
        raise ValueError(f"window ({lo}, {hi}) outside signal domain ({t0}, {t_end})")
    lo, hi = max(lo, t0), min(hi, t_end)
    if hi <= lo:
        return 0.0
    # fractional node positions of the window ends
    p_lo = (lo - t0) / dt
    p_hi = (hi - t0) / dt
    if abs(p_lo - round(p_lo)) < 1e-9:
        p_lo = float(round(p_lo))
    if abs(p_hi - round(p_hi)) < 1e-9:
        p_hi = float(round(p_hi))
    i_lo = int(np.ceil(p_lo))
    i_hi = int(np.floor(p_hi))

    def interp(p):
        i = min(int(np.floor(p)), n - 2)
        f = p - i
        return (1 - f) * values[i] + f * values[i + 1]

    total = 0.0
    if i_lo <= i_hi:
        inner = values[i_lo : i_hi + 1]
        if inner.size > 1:
            total += dt * (inner.sum() - 0.5 * (inner[0] + inner[-1]))
        if p_lo < i_lo:
            total += 0.5 * (interp(p_lo) + values[i_lo]) * (i_lo - p_lo) * dt
        if p_hi > i_hi:
            total += 0.5 * (values[i_hi] + interp(p_hi)) * (p_hi - i_hi) * dt
    else:
        total += 0.5 * (interp(p_lo) + interp(p_hi)) * (p_hi - p_lo) * dt
    return float(total)


def norm_L2(signal: TimeSignal, window=None) -> float:
    return float(np.sqrt(max(_window_integral(signal.samples**2, signal.dt, signal.t0, window), 0.0)))


def derivative(signal: TimeSignal) -> TimeSignal:
    """Centered differences inside, second-order one-sided at the ends."""
    return replace(signal, samples=np.gradient(signal.samples, signal.dt, edge_order=2))


def norm_H1(signal: TimeSignal, window=None) -> float:
    d = derivative(signal)
    sq = _window_integral(signal.samples**2, signal.dt, signal.t0, window)
    sq += _window_integral(d.samples**2, signal.dt, signal.t0, window)
    return float(np.sqrt(max(sq, 0.0)))


def window_nodes(t: np.ndarray, window, dt: float) -> np.ndarray:
    """Indices of nodes inside the closed window (with a rounding tolerance)."""
    lo, hi = window
    tol = 1e-9 * dt
    return np.flatnonzero((t >= lo - tol) & (t <= hi + tol))


def lowpass(signal: TimeSignal, cutoff: float = 2.0 / 3.0) -> TimeSignal:
    """Keep cosine modes up to ``cutoff`` times the Nyquist index.

    Uses the type-I DCT, i.e. the even extension about the end nodes, so a
    non-periodic signal is not polluted by wrap-around jumps.
    """
    x = signal.samples
    n = x.size - 1
    if n < 2 or cutoff >= 1.0:
        return replace(signal, samples=x.copy())
    c = spfft.dct(x, type=1)
    kmax = int(np.floor(cutoff * n))
    c[kmax + 1 :] = 0.0
    return replace(signal, samples=spfft.idct(c, type=1))


# --------------------------------------------------------------------------
# H^-1 sources


@dataclass
class SourceHminus:
    """Boundary source ``s = S'`` stored through its antiderivative.

    ``S[n]`` is the trapezoidal integral of ``s`` over the nodes up to ``t_n``,
    so ``s[n] = (S[n] - S[n-1]) / w[n]`` with ``w`` the trapezoid weights
    and ``S[-1] = 0``.  Interpreting ``S[n]`` as a sample at ``t_n + dt/2``
    makes this the centered difference of ``S`` about ``t_n``.  With this
    convention the discrete pairing identity

        sum_n w[n] s[n] p[n] = -sum_n dt S[n] (p[n+1] - p[n]) / dt + S[N] p[N]

    is exact (summation by parts), and the boundary term drops whenever
    ``p`` vanishes at the right end of the support window.
    """

    S: TimeSignal
    support: tuple[float, float]
    smoothing_passes: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a, b = self.support
        if not a < b:
            raise ValueError(f"empty support window {self.support}")
        self.support = (float(a), float(b))

    @property
    def dt(self) -> float:
        return self.S.dt

    @property
    def n(self) -> int:
        return len(self.S)

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n, self.dt)

    @property
    def s(self) -> TimeSignal:
        S = self.S.samples
        diff = np.diff(S, prepend=0.0)
        return TimeSignal(diff / self.weights, self.dt)

    @property
    def smoothing_radius(self) -> float:
        return self.smoothing_passes * self.dt

    @classmethod
    def from_rate(cls, samples, dt: float, support) -> "SourceHminus":
        s = np.asarray(samples, dtype=float)
        S = np.cumsum(trapezoid_weights(s.size, dt) * s)
        return cls(TimeSignal(S, dt), support)

    @classmethod
    def from_antiderivative(cls, S, dt: float, support) -> "SourceHminus":
        return cls(TimeSignal(S, dt), support)

    @classmethod
    def from_function(cls, func, grid, support, mask: bool = True) -> "SourceHminus":
        t = grid.t
        s = np.asarray(func(t), dtype=float) * np.ones_like(t)
        if mask:
            s = TimeSignal(s, grid.dt).masked(support).samples
        return cls.from_rate(s, grid.dt, support)

    @classmethod
    def zeros(cls, grid, support) -> "SourceHminus":
        return cls(TimeSignal(np.zeros(grid.Nt + 1), grid.dt), support)

    def scaled(self, c: float) -> "SourceHminus":
        return replace(self, S=self.S * c)

    def support_violation(self) -> float:
        """Largest |s| on nodes outside the closed support, relative to max |s|."""
        s = self.s
        inside = np.zeros(s.samples.size, dtype=bool)
        inside[window_nodes(s.t, self.support, self.dt)] = True
        peak = np.abs(s.samples).max()
        if peak == 0.0:
            return 0.0
        outside = np.abs(s.samples[~inside])
        return float(outside.max() / peak) if outside.size else 0.0

    def smoothed(self, passes: int = 1) -> "SourceHminus":
        """Apply ``passes`` binomial [1, 2, 1]/4 filters to ``S``.

        Each pass widens the support by one time step; the accumulated
        radius is kept in ``smoothing_radius``.
        """
        S = self.S.samples.copy()
        for _ in range(passes):
            padded = np.concatenate([[0.0], S, [S[-1]]])
            S = 0.25 * padded[:-2] + 0.5 * padded[1:-1] + 0.25 * padded[2:]
        return replace(self, S=replace(self.S, samples=S), smoothing_passes=self.smoothing_passes + passes)


def pairing(source: SourceHminus, p: TimeSignal) -> float:
    """Duality pairing <s, p> evaluated through the antiderivative of s."""
    S = source.S.samples
    pp = p.samples
    if pp.size != S.size:
        raise ValueError("pairing needs p and S on the same time grid")
    return float(-np.sum(S[:-1] * np.diff(pp)) + S[-1] * pp[-1])


def _dirichlet_solve(rhs: np.ndarray, h: float) -> np.ndarray:
    m = rhs.size
    ab = np.empty((3, m))
    ab[0, :] = -1.0 / h**2
    ab[1, :] = 2.0 / h**2
    ab[2, :] = -1.0 / h**2
    return solve_banded((1, 1), ab, rhs)


def hminus_norm_samples(s: np.ndarray, dt: float, first: int, last: int) -> float:
    """H^-1 norm on the node range [first, last] with v = 0 at both ends."""
    interior = s[first + 1 : last]
    if interior.size == 0:
        return 0.0
    v = np.zeros(interior.size + 2)
    v[1:-1] = _dirichlet_solve(interior, dt)
    dv = np.diff(v) / dt
    return float(np.sqrt(dt * np.sum(dv**2)))


def norm_Hminus(source: SourceHminus, window=None) -> float:
    """Dual norm of H^1_0(window) with the gradient norm.

    Solves -v'' = s on the window nodes with v = 0 at the window's end nodes
    and returns ||v'||_{L^2}.
    """
    window = source.support if window is None else window
    s = source.s
    idx = window_nodes(s.t, window, source.dt)
    if idx.size < 3:
        return 0.0
    return hminus_norm_samples(s.samples, source.dt, int(idx[0]), int(idx[-1]))
