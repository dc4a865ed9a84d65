import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinephase.errors import DomainError
from kinephase.model import (
    ModelParams,
    NoiseProfileKind,
    Region,
    branch_reaction,
    branch_slope,
    coord_x,
    f_cub,
    noise_amplitude,
    recover_u,
    wave_speed,
    wave_speed_inverse,
    wrap,
)

alphas = st.floats(0.01, 0.49)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(alpha=0.5)
    with pytest.raises(ValueError):
        ModelParams(L=0.0)
    with pytest.raises(ValueError):
        ModelParams(gamma=-1.0)
    assert ModelParams().decay == pytest.approx(4.0 / 3.0)


def test_wrap_half_open():
    assert wrap(10.0, 10.0) == 0.0
    assert wrap(-1e-18, 10.0) < 10.0
    np.testing.assert_allclose(wrap(np.array([-1.0, 11.0, 3.0]), 10.0), [9.0, 1.0, 3.0])


def test_f_cub_branches(params):
    assert f_cub(0.1, params) == pytest.approx(-0.1)
    assert f_cub(0.9, params) == pytest.approx(0.1)
    assert f_cub(params.alpha, params) == pytest.approx(-params.alpha)


def test_branch_reaction_is_stable_branch_root(params):
    k = params.decay
    assert branch_reaction(1.0 / k, Region.EXCITED, params) == pytest.approx(0.0)
    assert branch_reaction(0.0, Region.RELAXATION, params) == 0.0
    assert branch_slope(params) == -k
    w = np.array([0.1, 0.2])
    np.testing.assert_allclose(branch_reaction(w, np.array([0, 1]), params), [1 - k * 0.1, -k * 0.2])


def test_speed_zero_at_band_midpoint(params):
    assert wave_speed(0.5 - params.alpha, params) == pytest.approx(0.0, abs=1e-15)
    assert wave_speed(0.0, params) == pytest.approx(0.6 / np.sqrt(0.16))


@pytest.mark.parametrize("w", [-0.2, 0.8, 1.5])
def test_speed_outside_band_raises(params, w):
    with pytest.raises(DomainError):
        wave_speed(w, params)


@given(alpha=alphas, frac=st.floats(0.02, 0.98))
def test_speed_derivatives_match_finite_differences(alpha, frac):
    p = ModelParams(alpha=alpha)
    w = -alpha + frac
    h = 1e-6 * min(frac, 1 - frac)
    d1 = (wave_speed(w + h, p) - wave_speed(w - h, p)) / (2 * h)
    d2 = (wave_speed(w + h, p, 1) - wave_speed(w - h, p, 1)) / (2 * h)
    assert d1 == pytest.approx(wave_speed(w, p, 1), rel=1e-5)
    assert d2 == pytest.approx(wave_speed(w, p, 2), rel=1e-5, abs=1e-6)


@given(alpha=alphas, c=st.floats(-50.0, 50.0))
def test_inverse_speed_round_trip(alpha, c):
    p = ModelParams(alpha=alpha)
    w = wave_speed_inverse(c, p)
    assert -alpha < w < 1 - alpha
    assert wave_speed(w, p) == pytest.approx(c, rel=1e-9, abs=1e-12)


@given(alpha=alphas, a=st.floats(0.01, 0.98), b=st.floats(0.01, 0.98))
def test_speed_strictly_decreasing(alpha, a, b):
    p = ModelParams(alpha=alpha)
    if abs(a - b) < 1e-9:
        return
    assert (wave_speed(a - alpha, p) - wave_speed(b - alpha, p)) * (a - b) < 0


def test_recover_u_and_noise_amplitude():
    w = np.array([0.3, 0.3])
    regions = np.array([Region.EXCITED, Region.RELAXATION])
    np.testing.assert_allclose(recover_u(w, regions), [0.7, -0.3])
    np.testing.assert_allclose(noise_amplitude(w, regions, "exp_u"), np.exp([0.7, -0.3]))
    np.testing.assert_array_equal(noise_amplitude(w, regions, NoiseProfileKind.ADDITIVE), [1.0, 1.0])


def test_coord_x_anchors(pulse):
    geom = pulse.geometry
    rho = pulse.rho_star
    assert coord_x(pulse.x_minus_star, rho, geom) == pytest.approx(-rho)
    assert coord_x(pulse.x_plus_star, rho, geom) == pytest.approx(rho)
    # the R arc is stretched so its far end lands on -rho + L
    assert coord_x(pulse.x_minus_star - 1e-12, rho, geom) == pytest.approx(pulse.params.L - rho)


@settings(max_examples=50)
@given(rho=st.floats(0.05, 4.95), xi=st.floats(0.0, 9.999))
def test_coord_x_maps_arcs_onto_stretched_arcs(pulse, rho, xi):
    x = coord_x(xi, rho, pulse.geometry)
    assert -rho - 1e-9 <= x <= pulse.params.L - rho + 1e-9


@pytest.mark.parametrize("rho", [0.0, 5.0, -1.0])
def test_coord_x_rejects_bad_width(pulse, rho):
    with pytest.raises(DomainError):
        coord_x(1.0, rho, pulse.geometry)
