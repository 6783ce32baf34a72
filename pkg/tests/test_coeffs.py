import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sidewave.coeffs import (
    CoefficientProfile,
    Grid,
    GridError,
    ProfileError,
    cfl_ratio,
    check_cfl,
    compute_beta,
    sample_on_grid,
    total_variation,
)

pos = st.floats(min_value=0.1, max_value=10.0, allow_nan=False)


def test_beta_unit():
    assert compute_beta(CoefficientProfile.constant()) == 1.0


def test_beta_heavy_string():
    assert compute_beta(CoefficientProfile.constant(rho=4.0)) == pytest.approx(2.0, abs=1e-15)


def test_beta_piecewise_max():
    prof = CoefficientProfile.piecewise_constant([0, 0.5, 1], [1, 1], [1, 4])
    assert compute_beta(prof) == 1.0


def test_beta_linear_piece_attains_endpoint():
    # rho/a = (1 + x)/(1) on [0, 1] -> sup sqrt(2) at x = 1
    prof = CoefficientProfile([0, 1], [[1.0, 1.0]], [[1.0, 0.0]])
    assert compute_beta(prof) == pytest.approx(np.sqrt(2.0), rel=1e-15)
    # brute-force oracle on a dense sample
    x = np.linspace(0, 1, 10001)
    assert compute_beta(prof) >= np.sqrt(prof.rho(x) / prof.a(x)).max() - 1e-15


def test_invalid_profiles_rejected():
    with pytest.raises(ProfileError):
        CoefficientProfile([0, 1], [[1.0, -2.0]], [[1.0, 0.0]])  # rho(1) = -1
    with pytest.raises(ProfileError):
        CoefficientProfile([0, 0.5, 0.4], [[1, 0]] * 2, [[1, 0]] * 2)
    with pytest.raises(ProfileError):
        CoefficientProfile([0.1, 1], [[1, 0]], [[1, 0]])


def test_sample_constant():
    g = Grid(1.0, 1.0, 20, 40)
    rho, a = sample_on_grid(CoefficientProfile.constant(rho=2.0, a=3.0), g)
    assert np.all(rho == 2.0) and np.all(a == 3.0)


def test_sample_jump_on_node_uses_one_sided_values():
    g = Grid(1.0, 1.0, 10, 40)
    prof = CoefficientProfile.piecewise_constant([0, 0.5, 1], [1, 1], [1, 4])
    _, a = sample_on_grid(prof, g)
    assert np.allclose(a[:5], 1.0) and np.allclose(a[5:], 4.0)


def test_sample_jump_mid_interval_harmonic_mean():
    g = Grid(1.0, 1.0, 10, 40)
    prof = CoefficientProfile.piecewise_constant([0, 0.55, 1], [1, 1], [1, 4])
    _, a = sample_on_grid(prof, g)
    assert a[5] == pytest.approx(1.6, rel=1e-14)


def test_sample_density_dual_cell_average():
    g = Grid(1.0, 1.0, 10, 40)
    prof = CoefficientProfile.piecewise_constant([0, 0.5, 1], [1, 3], [1, 1])
    rho, _ = sample_on_grid(prof, g)
    assert rho[5] == pytest.approx(2.0)
    assert rho[0] == 1.0 and rho[-1] == 3.0


def test_tv_examples():
    assert total_variation(CoefficientProfile.constant()) == (0.0, 0.0)
    prof = CoefficientProfile.piecewise_constant([0, 0.5, 1], [1, 1], [1, 4])
    assert total_variation(prof)[1] == pytest.approx(3.0)
    lin = CoefficientProfile([0, 1], [[1.0, 1.0]], [[1.0, 0.0]])
    assert total_variation(lin)[0] == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(r=pos, a=pos, c=st.floats(min_value=0.2, max_value=5.0))
def test_beta_scaling(r, a, c):
    prof = CoefficientProfile.piecewise_constant([0, 0.3, 1], [r, 1.0], [1.0, a])
    scaled = prof.scaled(rho_factor=c * c)
    assert compute_beta(scaled) == pytest.approx(c * compute_beta(prof), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(r0=pos, r1=st.floats(-0.05, 0.05), a0=pos, x=st.floats(0.05, 0.95))
def test_refinement_invariance(r0, r1, a0, x):
    prof = CoefficientProfile([0, 0.5, 1], [[r0, r1], [1.0, 0.0]], [[a0, 0.0], [2.0, 0.0]])
    fine = prof.refine([x])
    assert compute_beta(fine) == pytest.approx(compute_beta(prof), rel=1e-12)
    tv, tv_f = total_variation(prof), total_variation(fine)
    assert tv_f == pytest.approx(tv, rel=1e-12, abs=1e-14)


def test_pieces_round_trip():
    prof = CoefficientProfile([0, 0.4, 1], [[1, 0.5], [2, 0]], [[1, 0], [2.25, -0.1]])
    again = CoefficientProfile.from_pieces(prof.to_pieces())
    assert np.array_equal(again.breakpoints, prof.breakpoints)
    assert np.array_equal(again.a_pieces, prof.a_pieces)


def test_grid_for_profile_meets_cfl():
    prof = CoefficientProfile.piecewise_constant([0, 0.4, 1], [1, 1], [1, 2.25])
    g = Grid.for_profile(prof, 2.0, 200)
    assert cfl_ratio(prof, g) <= 0.9
    with pytest.raises(GridError):
        check_cfl(prof, Grid(1.0, 2.0, 200, 100))


def test_grid_geometry():
    g = Grid(2.0, 3.0, 40, 90)
    assert g.dx == 0.05 and g.dt == pytest.approx(1 / 30)
    assert g.x[-1] == 2.0 and g.t.size == 91
    with pytest.raises(GridError):
        Grid(1.0, 1.0, 1, 10)
