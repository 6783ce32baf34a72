import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sidewave.coeffs import Grid
from sidewave.signals import (
    SourceHminus,
    TimeSignal,
    lowpass,
    norm_H1,
    norm_Hminus,
    norm_L2,
    pairing,
)


def test_l2_examples():
    T, n = 2.0, 2001
    dt = T / (n - 1)
    t = np.linspace(0, T, n)
    assert norm_L2(TimeSignal(np.zeros(n), dt)) == 0.0
    assert norm_L2(TimeSignal(np.ones(n), dt)) == pytest.approx(np.sqrt(T), rel=1e-14)
    assert norm_L2(TimeSignal(np.sin(np.pi * t / T), dt)) == pytest.approx(np.sqrt(T / 2), rel=1e-6)


def test_l2_window_fractional_ends():
    dt = 0.01
    sig = TimeSignal(np.ones(101), dt)
    assert norm_L2(sig, (0.123, 0.789)) == pytest.approx(np.sqrt(0.789 - 0.123), rel=1e-12)


def test_h1_of_sine():
    T, n = 1.0, 4001
    t = np.linspace(0, T, n)
    sig = TimeSignal(np.sin(np.pi * t), T / (n - 1))
    exact = np.sqrt(0.5 + 0.5 * np.pi**2)
    assert norm_H1(sig) == pytest.approx(exact, rel=1e-5)


def test_hminus_first_dirichlet_mode():
    g = Grid(1.0, 3.0, 10, 3000)
    a, w = 0.7, 1.9
    k = np.pi / (w - a)
    src = SourceHminus.from_function(lambda t: k**2 * np.sin(k * (t - a)), g, (a, w))
    assert norm_Hminus(src) == pytest.approx(k * np.sqrt((w - a) / 2), rel=1e-5)
    assert norm_Hminus(SourceHminus.zeros(g, (a, w))) == 0.0


def test_hminus_is_dual_norm():
    # sup over discrete v in H^1_0 of (sum w s v) / ||v'|| is attained by the Poisson solution
    rng = np.random.default_rng(4)
    dt, n = 0.05, 41
    s = np.zeros(n)
    s[1:-1] = rng.standard_normal(n - 2)
    src = SourceHminus.from_rate(s, dt, (0.0, dt * (n - 1)))
    m = n - 2
    D = (np.eye(m + 1, m, 0) - np.eye(m + 1, m, -1)) / dt  # v' on the m+1 intervals
    G = dt * D.T @ D
    b = dt * src.s.samples[1:-1]
    sup = np.sqrt(b @ np.linalg.solve(G, b))
    assert norm_Hminus(src) == pytest.approx(sup, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_pairing_summation_by_parts(seed):
    rng = np.random.default_rng(seed)
    n, dt = 64, 0.03
    s = rng.standard_normal(n)
    p = rng.standard_normal(n)
    src = SourceHminus.from_rate(s, dt, (0, dt * (n - 1)))
    w = src.weights
    assert pairing(src, TimeSignal(p, dt)) == pytest.approx(np.sum(w * s * p), rel=1e-11, abs=1e-11)


def test_rate_round_trip():
    rng = np.random.default_rng(1)
    s = rng.standard_normal(50)
    src = SourceHminus.from_rate(s, 0.1, (0.0, 4.9))
    assert np.allclose(src.s.samples, s, atol=1e-13)


def test_lowpass_keeps_smooth_and_kills_nyquist():
    n = 200
    t = np.linspace(0, 1, n + 1)
    smooth = np.cos(3 * np.pi * t)
    assert np.allclose(lowpass(TimeSignal(smooth, 1 / n)).samples, smooth, atol=1e-12)
    saw = (-1.0) ** np.arange(n + 1)
    assert np.abs(lowpass(TimeSignal(saw, 1 / n)).samples).max() < 1e-12


def test_signal_rejects_nan():
    with pytest.raises(ValueError):
        TimeSignal(np.array([0.0, np.nan]), 0.1)
