"""Piecewise-linear BV coefficient profiles and space-time grids.

A profile stores the density ``rho`` and stiffness ``a`` as one linear
polynomial per interval between breakpoints.  Each piece is written as
``c0 + c1 * (x - x_left)``, so ``c0`` is the value just to the right of
the piece's left breakpoint.  Jumps live on breakpoints only; at a
breakpoint the evaluation functions return the right-hand limit, except at
``x = L`` where the left-hand limit is the only one available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ProfileError(ValueError):
    """Raised when a coefficient profile violates its structural assumptions."""


class GridError(ValueError):
    """Raised for inconsistent grids, including CFL violations."""


def _as_pieces(pieces, n: int, name: str) -> np.ndarray:
    arr = np.asarray(pieces, dtype=float)
    if arr.ndim == 1 and n == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.shape != (n, 2):
        raise ProfileError(f"{name} needs one (c0, c1) pair per interval, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class CoefficientProfile:
    breakpoints: np.ndarray
    rho_pieces: np.ndarray
    a_pieces: np.ndarray

    def __init__(self, breakpoints: Sequence[float], rho_pieces, a_pieces):
        bp = np.asarray(breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise ProfileError("need at least two breakpoints")
        if bp[0] != 0.0:
            raise ProfileError(f"first breakpoint must be 0, got {bp[0]}")
        if np.any(np.diff(bp) <= 0):
            raise ProfileError("breakpoints must be strictly increasing")
        n = bp.size - 1
        rho = _as_pieces(rho_pieces, n, "rho_pieces")
        a = _as_pieces(a_pieces, n, "a_pieces")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(a))):
            raise ProfileError("coefficients must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "rho_pieces", rho)
        object.__setattr__(self, "a_pieces", a)
        for name in ("rho", "a"):
            left, right = self._endpoint_values(name)
            if min(left.min(), right.min()) <= 0.0:
                raise ProfileError(f"{name} must stay strictly positive on every piece")

    # construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, L: float = 1.0, rho: float = 1.0, a: float = 1.0) -> "CoefficientProfile":
        return cls([0.0, L], [[rho, 0.0]], [[a, 0.0]])

    @classmethod
    def piecewise_constant(cls, breakpoints, rho_values, a_values) -> "CoefficientProfile":
        rho = [[v, 0.0] for v in rho_values]
        a = [[v, 0.0] for v in a_values]
        return cls(breakpoints, rho, a)

    @classmethod
    def from_pieces(cls, pieces: Sequence[dict]) -> "CoefficientProfile":
        """Build from ``[{x_left, x_right, rho: [c0, c1], a: [c0, c1]}, ...]``."""
        if not pieces:
            raise ProfileError("empty piece list")
        bps = [float(pieces[0]["x_left"])]
        for prev, cur in zip(pieces, pieces[1:]):
            if float(prev["x_right"]) != float(cur["x_left"]):
                raise ProfileError(
                    f"pieces are not contiguous: {prev['x_right']} != {cur['x_left']}"
                )
        bps += [float(p["x_right"]) for p in pieces]
        return cls(bps, [p["rho"] for p in pieces], [p["a"] for p in pieces])

    def to_pieces(self) -> list[dict]:
        bp = self.breakpoints
        return [
            {
                "x_left": float(bp[i]),
                "x_right": float(bp[i + 1]),
                "rho": [float(v) for v in self.rho_pieces[i]],
                "a": [float(v) for v in self.a_pieces[i]],
            }
            for i in range(self.n_pieces)
        ]

    # basic queries --------------------------------------------------------

    @property
    def L(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n_pieces(self) -> int:
        return self.breakpoints.size - 1

    def _coef(self, name: str) -> np.ndarray:
        return self.rho_pieces if name == "rho" else self.a_pieces

    def _endpoint_values(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        c = self._coef(name)
        h = np.diff(self.breakpoints)
        return c[:, 0], c[:, 0] + c[:, 1] * h

    def _piece_index(self, x: np.ndarray, side: str) -> np.ndarray:
        bp = self.breakpoints
        if side == "right":
            idx = np.searchsorted(bp, x, side="right") - 1
        else:
            idx = np.searchsorted(bp, x, side="left") - 1
        return np.clip(idx, 0, self.n_pieces - 1)

    def _eval(self, name: str, x, side: str):
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x > self.L)):
            raise ValueError("evaluation point outside [0, L]")
        idx = self._piece_index(x, side)
        c = self._coef(name)
        val = c[idx, 0] + c[idx, 1] * (x - self.breakpoints[idx])
        return float(val) if val.ndim == 0 else val

    def rho(self, x, side: str = "right"):
        return self._eval("rho", x, side)

    def a(self, x, side: str = "right"):
        return self._eval("a", x, side)

    def a_left(self, x):
        """One-sided limit a(x-); at x = 0 this falls back to a(0+)."""
        return self._eval("a", x, "left")

    def a_right(self, x):
        """One-sided limit a(x+); at x = L this falls back to a(L-)."""
        return self._eval("a", x, "right")

    @property
    def a0_plus(self) -> float:
        return float(self.a_pieces[0, 0])

    @property
    def aL_minus(self) -> float:
        c = self.a_pieces[-1]
        return float(c[0] + c[1] * (self.breakpoints[-1] - self.breakpoints[-2]))

    def bounds(self) -> dict[str, float]:
        """Positivity bounds (rho0, rho1, a0, a1); extremes of linear pieces sit at endpoints."""
        out = {}
        for name in ("rho", "a"):
            left, right = self._endpoint_values(name)
            vals = np.concatenate([left, right])
            out[f"{name}0"] = float(vals.min())
            out[f"{name}1"] = float(vals.max())
        return out

    @property
    def is_constant(self) -> bool:
        return bool(
            np.all(self.rho_pieces[:, 1] == 0)
            and np.all(self.a_pieces[:, 1] == 0)
            and np.all(self.rho_pieces[:, 0] == self.rho_pieces[0, 0])
            and np.all(self.a_pieces[:, 0] == self.a_pieces[0, 0])
        )

    def refine(self, extra_breakpoints: Sequence[float]) -> "CoefficientProfile":
        """Same functions on a finer breakpoint list."""
        new_bp = np.union1d(self.breakpoints, np.asarray(extra_breakpoints, dtype=float))
        new_bp = new_bp[(new_bp >= 0) & (new_bp <= self.L)]
        rho, a = [], []
        for xl in new_bp[:-1]:
            i = int(self._piece_index(np.asarray(xl), "right"))
            off = xl - self.breakpoints[i]
            for src, dst in ((self.rho_pieces, rho), (self.a_pieces, a)):
                c0, c1 = src[i]
                dst.append([c0 + c1 * off, c1])
        return CoefficientProfile(new_bp, rho, a)

    def scaled(self, rho_factor: float = 1.0, a_factor: float = 1.0) -> "CoefficientProfile":
        return CoefficientProfile(
            self.breakpoints, self.rho_pieces * rho_factor, self.a_pieces * a_factor
        )


def compute_beta(profile: CoefficientProfile) -> float:
    """Exact ess sup of sqrt(rho/a).

    On a piece, rho/a is a ratio of linear functions whose derivative has the
    constant sign of ``r1*a0 - r0*a1``, so the supremum sits at a piece endpoint.
    """
    rl, rr = profile._endpoint_values("rho")
    al, ar = profile._endpoint_values("a")
    ratio = np.concatenate([rl / al, rr / ar])
    return float(np.sqrt(ratio.max()))


def total_variation(profile: CoefficientProfile) -> tuple[float, float]:
    """(TV(rho), TV(a)): absolute jumps at interior breakpoints plus |slope| * length."""
    h = np.diff(profile.breakpoints)
    out = []
    for name in ("rho", "a"):
        c = profile._coef(name)
        left, right = profile._endpoint_values(name)
        jumps = np.abs(left[1:] - right[:-1]).sum()
        out.append(float(jumps + np.sum(np.abs(c[:, 1]) * h)))
    return out[0], out[1]


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Grid:
    L: float
    T: float
    Nx: int
    Nt: int

    def __post_init__(self):
        if self.Nx < 2 or self.Nt < 2:
            raise GridError("Nx and Nt must be at least 2")
        if self.L <= 0 or self.T <= 0:
            raise GridError("L and T must be positive")

    @property
    def dx(self) -> float:
        return self.L / self.Nx

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.Nx + 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.Nt + 1)

    def node_of(self, x: float) -> int:
        return int(round(x / self.dx))

    @classmethod
    def for_profile(
        cls, profile: CoefficientProfile, T: float, Nx: int, cfl_safety: float = 0.9
    ) -> "Grid":
        """Smallest Nt whose time step passes the CFL certificate."""
        if not 0 < cfl_safety <= 1:
            raise GridError("cfl_safety must lie in (0, 1]")
        probe = cls(profile.L, T, Nx, 2)
        dt_max = cfl_safety * probe.dx * cfl_speed_factor(profile, probe)
        Nt = int(np.ceil(T / dt_max * (1 + 1e-12)))
        return cls(profile.L, T, Nx, max(Nt, 2))


def cfl_speed_factor(profile: CoefficientProfile, grid: Grid) -> float:
    """min over faces of sqrt(rho_cell / a_face), both adjacent cells considered."""
    rho, a_face = sample_on_grid(profile, grid)
    left = np.sqrt(rho[:-1] / a_face)
    right = np.sqrt(rho[1:] / a_face)
    return float(min(left.min(), right.min()))


def cfl_ratio(profile: CoefficientProfile, grid: Grid) -> float:
    """dt divided by the largest admissible step; must be <= cfl_safety."""
    return grid.dt / (grid.dx * cfl_speed_factor(profile, grid))


def check_cfl(profile: CoefficientProfile, grid: Grid, cfl_safety: float = 0.9) -> float:
    ratio = cfl_ratio(profile, grid)
    if ratio > cfl_safety * (1 + 1e-12):
        raise GridError(
            f"CFL certificate fails: dt/dt_max = {ratio:.4f} > {cfl_safety}"
        )
    return ratio


def _piece_integral(c0, c1, u0, u1):
    # integral of c0 + c1*u over [u0, u1]
    return c0 * (u1 - u0) + 0.5 * c1 * (u1**2 - u0**2)


def _piece_inverse_integral(c0, c1, u0, u1):
    # integral of 1/(c0 + c1*u) over [u0, u1]
    if c1 == 0.0:
        return (u1 - u0) / c0
    return np.log((c0 + c1 * u1) / (c0 + c1 * u0)) / c1


def _segment_average(profile, name, xa, xb, harmonic):
    bp = profile.breakpoints
    c = profile._coef(name)
    total = 0.0
    i = int(profile._piece_index(np.asarray(xa), "right"))
    while i < profile.n_pieces and bp[i] < xb:
        lo, hi = max(xa, bp[i]), min(xb, bp[i + 1])
        if hi > lo:
            c0, c1 = c[i]
            f = _piece_inverse_integral if harmonic else _piece_integral
            total += f(c0, c1, lo - bp[i], hi - bp[i])
        i += 1
    if harmonic:
        return (xb - xa) / total
    return total / (xb - xa)


def sample_on_grid(profile: CoefficientProfile, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Nodal density and per-interval stiffness.

    ``rho[j]`` is the mean of rho over the dual cell ``[x_j - dx/2, x_j + dx/2]``
    clipped to ``[0, L]``.  ``a_face[j]`` belongs to the interval
    ``[x_j, x_{j+1}]`` and is the exact harmonic mean of a over it, which is the
    effective conductivity of that interval.  A jump lying on a node therefore
    leaves each neighbouring interval with its own one-sided value, while a jump
    inside an interval produces the harmonic mean of the two sides.
    """
    if abs(grid.L - profile.L) > 1e-12 * profile.L:
        raise GridError("grid length does not match profile length")
    x = grid.x
    dx = grid.dx
    if profile.is_constant:
        return (
            np.full(grid.Nx + 1, profile.rho_pieces[0, 0]),
            np.full(grid.Nx, profile.a_pieces[0, 0]),
        )
    rho = np.empty(grid.Nx + 1)
    for j, xj in enumerate(x):
        rho[j] = _segment_average(profile, "rho", max(xj - dx / 2, 0.0), min(xj + dx / 2, grid.L), False)
    a_face = np.array(
        [_segment_average(profile, "a", x[j], x[j + 1], True) for j in range(grid.Nx)]
    )
    return rho, a_face
