import numpy as np
import pytest

from conftest import smooth_bump
from sidewave.coeffs import CoefficientProfile, Grid
from sidewave.fdsolver import adjoint_solve, backward_solve
from sidewave.signals import SourceHminus, TimeSignal, norm_L2
from sidewave.spectral import (
    EigenPair,
    eigensolve,
    endpoint_table,
    homogeneous_trace,
    mass_weights,
    modal_coefficients,
    mode_amplitude,
    synthesize_trace,
    write_eigen_csv,
)


def _orthonormality_residual(pairs, mass):
    W = np.column_stack([p.w for p in pairs])
    return np.abs(W.T @ (mass[:, None] * W) - np.eye(len(pairs))).max()


def test_constant_spectrum_closed_form():
    prof = CoefficientProfile.constant()
    g = Grid(1.0, 1.0, 2000, 10)
    pairs = eigensolve(prof, g, 20)
    k = np.arange(1, 21)
    lam = np.array([p.lam for p in pairs])
    exact = (np.pi * (k - 1)) ** 2
    assert lam[0] == 0.0
    assert np.all(np.abs(lam[1:] - exact[1:]) / exact[1:] < 1e-3)
    assert _orthonormality_residual(pairs, mass_weights(prof, g)) < 1e-10


def test_discrete_dispersion_relation():
    # with the half-mass closure the discrete spectrum is known exactly
    prof = CoefficientProfile.constant()
    g = Grid(1.0, 1.0, 400, 10)
    lam = np.array([p.lam for p in eigensolve(prof, g, 100)])
    k = np.arange(100)
    exact = (2 / g.dx * np.sin(k * np.pi * g.dx / 2)) ** 2
    assert np.allclose(lam, exact, rtol=1e-10, atol=1e-9)


def test_normalized_cosines():
    prof = CoefficientProfile.constant()
    g = Grid(1.0, 1.0, 1000, 10)
    pairs = eigensolve(prof, g, 10)
    assert np.allclose(pairs[0].w, 1.0, atol=1e-12)
    for p in pairs[1:]:
        assert abs(p.w0) == pytest.approx(np.sqrt(2), rel=1e-9)
        assert abs(p.wL) == pytest.approx(np.sqrt(2), rel=1e-9)
        assert p.w0 > 0


def test_heavy_string_scaling():
    prof = CoefficientProfile.constant(rho=4.0)
    g = Grid(1.0, 1.0, 2000, 10)
    lam = np.array([p.lam for p in eigensolve(prof, g, 10)])
    k = np.arange(1, 11)
    assert np.allclose(lam[1:], (np.pi * (k[1:] - 1)) ** 2 / 4, rtol=1e-4)
    w1 = eigensolve(prof, g, 1)[0].w
    assert np.allclose(w1, 0.5, atol=1e-12)  # 1 / sqrt(int rho)


def test_refuses_unresolvable_K():
    g = Grid(1.0, 1.0, 40, 10)
    with pytest.raises(ValueError):
        eigensolve(CoefficientProfile.constant(), g, 11)
    assert len(eigensolve(CoefficientProfile.constant(), g, 41, allow_full=True)) == 41


def test_gap_property():
    g = Grid(1.0, 1.0, 2000, 10)
    # discrete dispersion shrinks the gap by about (k pi dx)^2 / 8, below 1e-6 for the first two gaps
    om = np.array([p.freq for p in eigensolve(CoefficientProfile.constant(), g, 3)])
    assert np.allclose(np.diff(om), np.pi, rtol=1e-6)
    om = np.array([p.freq for p in eigensolve(CoefficientProfile.constant(), g, 20)])
    assert np.all(np.diff(om) >= np.pi * (1 - (20 * np.pi * g.dx) ** 2 / 8))


def test_growth_and_endpoints(jump_profile):
    g = Grid(1.0, 1.0, 800, 10)
    pairs = eigensolve(jump_profile, g, 40)
    k = np.arange(1, 41)
    lam = np.array([p.lam for p in pairs])
    ratio = lam[19:] / k[19:] ** 2
    assert np.all(ratio > 0) and ratio.max() / ratio.min() < 1.3
    ends = np.abs(endpoint_table(pairs)[:, 2:])
    assert ends.min() >= 0.1 * np.median(ends)
    assert np.all(np.diff(lam) > 0)


def test_parseval_full_basis(jump_profile):
    g = Grid(1.0, 1.0, 30, 10)
    pairs = eigensolve(jump_profile, g, 31, allow_full=True)
    m = mass_weights(jump_profile, g)
    assert _orthonormality_residual(pairs, m) < 1e-10
    f = np.random.default_rng(2).standard_normal(31)
    c = modal_coefficients(pairs, m, f)
    assert np.sum(c**2) == pytest.approx(np.sum(m * f * f), rel=1e-12)


@pytest.mark.parametrize("lam", [0.0, np.pi**2, 25.0])
def test_duhamel_mode_solves_ode(lam):
    g = Grid(1.0, 2.0, 10, 40000)
    t = g.t
    s = smooth_bump(t, 0.3, 1.7)
    w = np.zeros(11)
    w[-1] = 1.3
    pair = EigenPair(2, lam, w)
    psi = mode_amplitude(pair, s, 0.8, g).samples
    d2 = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / g.dt**2
    res = d2 + lam * psi[1:-1] - 0.8 * 1.3 * s[1:-1]
    assert np.abs(res).max() / np.abs(s).max() < 1e-6
    assert abs(psi[-1]) < 1e-15 and abs(psi[-2]) < 1e-10


def test_synthesis_matches_fd():
    prof = CoefficientProfile.constant()
    g = Grid.for_profile(prof, 3.0, 800)
    s = smooth_bump(g.t, 1.0, 3.0)
    src = SourceHminus.from_rate(s, g.dt, (1.0, 3.0))
    fd = adjoint_solve(prof, g, src).trace_psi0
    sp = synthesize_trace(eigensolve(prof, g, 64), src, prof.aL_minus, g)
    assert norm_L2(fd - sp) / norm_L2(fd) < 1e-2
    assert not np.any(synthesize_trace(eigensolve(prof, g, 8), np.zeros(g.Nt + 1), 1.0, g).samples)


def test_homogeneous_trace_examples():
    prof = CoefficientProfile.constant()
    g = Grid.for_profile(prof, 2.0, 400)
    pairs = eigensolve(prof, g, 10)
    one = homogeneous_trace(pairs, np.eye(10)[3], np.zeros(10), g).samples
    assert np.allclose(one, pairs[3].wL * np.cos(np.sqrt(pairs[3].lam) * (g.T - g.t)), atol=1e-12)
    assert not np.any(homogeneous_trace(pairs, np.zeros(10), np.zeros(10), g).samples)


def test_homogeneous_trace_matches_fd(jump_profile):
    g = Grid.for_profile(jump_profile, 2.0, 400)
    pairs = eigensolve(jump_profile, g, 10)
    rng = np.random.default_rng(8)
    c0, c1 = rng.standard_normal(10), rng.standard_normal(10)
    W = np.column_stack([p.w for p in pairs])
    fd = backward_solve(jump_profile, g, {}, (W @ c0, W @ c1)).trace_psiL
    ser = homogeneous_trace(pairs, c0, c1, g)
    assert norm_L2(fd - ser) / norm_L2(fd) < 1e-2


def test_eigen_csv(tmp_path):
    g = Grid(1.0, 1.0, 100, 10)
    pairs = eigensolve(CoefficientProfile.constant(), g, 5)
    write_eigen_csv(tmp_path / "e.csv", pairs)
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "k,lambda,w0,wL" and len(rows) == 6
    assert float(rows[2].split(",")[1]) == pairs[1].lam
