"""Sturm-Liouville eigenpairs of the discrete operator and Fourier synthesis.

The eigenproblem uses the same lumped mass and interval stiffness as the
finite-difference solver, so modal expansions and leapfrog solutions are two
discretizations of one semi-discrete system and can check each other.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .coeffs import CoefficientProfile, Grid
from .fdsolver import WaveOperator, _samples
from .signals import SourceHminus, TimeSignal


class DegenerateSpectrumError(RuntimeError):
    pass


@dataclass
class EigenPair:
    k: int
    lam: float
    w: np.ndarray

    @property
    def w0(self) -> float:
        return float(self.w[0])

    @property
    def wL(self) -> float:
        return float(self.w[-1])

    @property
    def freq(self) -> float:
        return float(np.sqrt(max(self.lam, 0.0)))


def eigensolve(
    profile: CoefficientProfile,
    grid: Grid,
    K: int,
    allow_full: bool = False,
    gap_tol: float = 1e-12,
) -> list[EigenPair]:
    """Lowest K eigenpairs of -(a w')' = lam rho w with Neumann ends.

    ``A w = lam B w`` with ``B`` the lumped mass is symmetrized as
    ``B^{-1/2} A B^{-1/2}`` (still tridiagonal) and handed to LAPACK's
    tridiagonal solver.  Eigenvectors are orthonormal in the mass inner
    product and signed so that ``w_k(0) > 0``.  ``allow_full`` lifts the
    ``K <= Nx/4`` resolvability limit, e.g. for Parseval checks.
    """
    n = grid.Nx + 1
    limit = n if allow_full else grid.Nx // 4
    if K < 1 or K > limit:
        raise ValueError(f"K={K} outside resolvable range 1..{limit}")
    op = WaveOperator.build(profile, grid)
    c = op.a_face / op.dx
    diag = np.zeros(n)
    diag[:-1] += c
    diag[1:] += c
    off = -c
    sq = np.sqrt(op.mass)
    d = diag / op.mass
    e = off / (sq[:-1] * sq[1:])
    lam, v = eigh_tridiagonal(d, e, select="i", select_range=(0, K - 1))
    gaps = np.diff(lam)
    if gaps.size and gaps.min() < gap_tol * max(1.0, abs(lam[-1])):
        i = int(np.argmin(gaps))
        raise DegenerateSpectrumError(
            f"eigenvalues {i + 1} and {i + 2} are not separated: gap {gaps[i]:.3e}"
        )
    w = v / sq[:, None]
    pairs = []
    for k in range(K):
        wk = w[:, k]
        if wk[0] < 0:
            wk = -wk
        lk = float(lam[k])
        if k == 0:
            lk = 0.0 if abs(lk) < 1e-9 * max(1.0, abs(lam[-1])) else lk
        pairs.append(EigenPair(k + 1, lk, wk.copy()))
    return pairs


def mass_weights(profile: CoefficientProfile, grid: Grid) -> np.ndarray:
    return WaveOperator.build(profile, grid).mass


def modal_coefficients(pairs: Sequence[EigenPair], mass: np.ndarray, f: np.ndarray) -> np.ndarray:
    """rho-weighted projections (f, w_k)."""
    W = np.column_stack([p.w for p in pairs])
    return W.T @ (mass * f)


def _reverse_cumtrapz(vals: np.ndarray, dt: float) -> np.ndarray:
    # out[n] = trapezoidal integral of vals from t_n to T
    seg = 0.5 * dt * (vals[1:] + vals[:-1])
    out = np.zeros_like(vals)
    out[:-1] = np.cumsum(seg[::-1])[::-1]
    return out


def duhamel_mode(lam: float, s: np.ndarray, t: np.ndarray, dt: float) -> np.ndarray:
    """int_t^T k(t - tau) s(tau) dtau with k(r) = sin(sqrt(lam) r)/sqrt(lam), k(r) = r at lam = 0."""
    if lam <= 0.0:
        # int_t^T (t - tau) s dtau = t*I0(t) - I1(t)
        return t * _reverse_cumtrapz(s, dt) - _reverse_cumtrapz(t * s, dt)
    om = np.sqrt(lam)
    c = _reverse_cumtrapz(np.cos(om * t) * s, dt)
    sn = _reverse_cumtrapz(np.sin(om * t) * s, dt)
    return (np.sin(om * t) * c - np.cos(om * t) * sn) / om


def synthesize_trace(
    pairs: Sequence[EigenPair],
    s,
    aL: float,
    grid: Grid,
    at: str = "0",
) -> TimeSignal:
    """Truncated modal series for psi(0, t) (or psi(L, t) with ``at='L'``).

    psi(x, t) = -aL sum_k w_k(L) w_k(x) int_t^T sin(sqrt(lam_k)(t - tau)) / sqrt(lam_k) s(tau) dtau,
    with the zero eigenvalue handled by its limit kernel (t - tau).  Modes are
    summed in index order.
    """
    s_s = _samples(s, grid)
    t = grid.t
    out = np.zeros_like(t)
    for p in pairs:
        wx = p.w0 if at == "0" else p.wL
        out += -aL * wx * p.wL * duhamel_mode(p.lam, s_s, t, grid.dt)
    return TimeSignal(out, grid.dt)


def mode_amplitude(pair: EigenPair, s, aL: float, grid: Grid) -> TimeSignal:
    """psi_k(t) solving psi_k'' + lam_k psi_k = aL w_k(L) s, psi_k(T) = psi_k'(T) = 0."""
    s_s = _samples(s, grid)
    return TimeSignal(-aL * pair.wL * duhamel_mode(pair.lam, s_s, grid.t, grid.dt), grid.dt)


def homogeneous_trace(
    pairs: Sequence[EigenPair],
    p0_coef,
    p1_coef,
    grid: Grid,
    at: str = "L",
) -> TimeSignal:
    """Trace of the free solution with terminal modal data at t = T.

    p(x, t) = sum_k [p0_k cos(sqrt(lam_k)(T - t)) - p1_k sin(sqrt(lam_k)(T - t)) / sqrt(lam_k)] w_k(x)
    """
    p0_coef = np.asarray(p0_coef, dtype=float)
    p1_coef = np.asarray(p1_coef, dtype=float)
    tau = grid.T - grid.t
    out = np.zeros_like(tau)
    for p, a0, a1 in zip(pairs, p0_coef, p1_coef):
        wx = p.wL if at == "L" else p.w0
        if p.lam <= 0.0:
            term = a0 - a1 * tau
        else:
            om = np.sqrt(p.lam)
            term = a0 * np.cos(om * tau) - a1 * np.sin(om * tau) / om
        out += term * wx
    return TimeSignal(out, grid.dt)


def endpoint_table(pairs: Sequence[EigenPair]) -> np.ndarray:
    return np.array([[p.k, p.lam, p.w0, p.wL] for p in pairs])


def write_eigen_csv(path, pairs: Sequence[EigenPair]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "lambda", "w0", "wL"])
        for p in pairs:
            wr.writerow([p.k, f"{p.lam:.17g}", f"{p.w0:.17g}", f"{p.wL:.17g}"])
