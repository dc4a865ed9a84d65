import csv

import numpy as np
import pytest

from conftest import GAUSSIAN_A_SQ
from kinephase.errors import Instability
from kinephase.model import wave_speed
from kinephase.noise import build_noise_spec, directions
from kinephase.variation import (
    VariationState,
    default_dt,
    integrate_batch,
    integrate_variations,
    rhs_first,
    rhs_second,
    write_traces_csv,
)


def smooth_direction(pulse, k=1):
    xi = pulse.grid.nodes
    return np.cos(2 * np.pi * k * xi / pulse.params.L) + 0.3 * np.sin(2 * np.pi * xi / pulse.params.L)


def _close(a, b, rel):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return np.max(np.abs(a - b)) <= rel * scale


class NonlinearFlow:
    """Deterministic transformed flow of (w, rho), written out directly from the speed law.

    The drift evaluated at the sampled pulse is subtracted so the pulse is an
    exact fixed point; derivatives in the initial data are unaffected.
    """

    def __init__(self, pulse):
        self.p = pulse
        g = pulse.grid
        self.e = g.excited
        self.s = g.ramp
        self.h = g.spacing
        self.k = pulse.params.decay
        self.L = pulse.params.L
        self.rs = pulse.rho_star
        self.base = np.where(self.e, 1.0, 0.0)
        self.offset = (0.0, 0.0)
        self.offset = self.drift(np.array(pulse.w_star), pulse.rho_star)

    def drift(self, w, rho):
        g = self.p.grid
        cp = wave_speed(w[g.index_plus], self.p.params)
        cm = wave_speed(w[g.index_minus], self.p.params)
        total = cp + cm
        a_e = self.s * total / (2 * rho) - cm * self.rs / rho
        a_r = (cp * (self.L - 2 * self.rs) - self.s * total) / (self.L - 2 * rho)
        dw = (np.roll(w, -1) - w) / self.h
        fw = np.where(self.e, a_e, a_r) * dw + self.base - self.k * w
        return fw - self.offset[0], 0.5 * total - self.offset[1]

    def run(self, w, rho, dt, n):
        for _ in range(n):
            k1 = self.drift(w, rho)
            k2 = self.drift(w + 0.5 * dt * k1[0], rho + 0.5 * dt * k1[1])
            k3 = self.drift(w + 0.5 * dt * k2[0], rho + 0.5 * dt * k2[1])
            k4 = self.drift(w + dt * k3[0], rho + dt * k3[1])
            w = w + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            rho = rho + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        return w, rho


def test_zero_state_has_zero_derivative(pulse):
    z = VariationState.initial(np.zeros(pulse.grid.size))
    dv, dr = rhs_first(z, pulse)
    dnu, dz = rhs_second(z, pulse)
    assert not dv.any() and dr == 0 and not dnu.any() and dz == 0


def test_zero_direction_stays_zero(pulse):
    tr = integrate_variations(pulse, np.zeros(pulse.grid.size), T_s=5.0)
    for arr in (tr.v_plus, tr.v_minus, tr.nu_plus, tr.nu_minus, tr.rho_dev_t, tr.zeta_dev_t):
        assert not arr.any()


def test_first_rhs_is_linear(pulse):
    v = smooth_direction(pulse, 3)
    s1 = VariationState(v, 0.2, np.zeros_like(v), 0.0)
    s2 = VariationState(2 * v, 0.4, np.zeros_like(v), 0.0)
    a, b = rhs_first(s1, pulse), rhs_first(s2, pulse)
    np.testing.assert_array_equal(2 * a[0], b[0])
    assert 2 * a[1] == b[1]


def test_translation_width_rate(pulse):
    dw = pulse.dw_star
    state = VariationState(dw, 0.0, np.zeros_like(dw), 0.0)
    _, dr = rhs_first(state, pulse)
    ip, im = pulse.grid.index_plus, pulse.grid.index_minus
    expect = 0.5 * (pulse.c0_plus_prime * dw[ip] + pulse.c0_minus_prime * dw[im])
    assert dr == pytest.approx(expect, rel=1e-14)


def test_second_rhs_is_even_and_quadratic(pulse):
    v = smooth_direction(pulse, 2)
    zero = np.zeros_like(v)
    base = rhs_second(VariationState(v, 0.1, zero, 0.0), pulse)
    flipped = rhs_second(VariationState(-v, -0.1, zero, 0.0), pulse)
    np.testing.assert_array_equal(base[0], flipped[0])
    assert base[1] == flipped[1]
    for s in (1.0, 2.0, 4.0):
        scaled = rhs_second(VariationState(s * v, s * 0.1, zero, 0.0), pulse)
        np.testing.assert_allclose(scaled[0], s * s * base[0], rtol=1e-12, atol=1e-12)
        assert scaled[1] == pytest.approx(s * s * base[1], rel=1e-12)


def test_traces_linear_and_sign_invariant(pulse):
    v0 = smooth_direction(pulse)
    ref, neg, dbl = integrate_batch(pulse, np.stack([v0, -v0, 2 * v0]), T_s=20.0, max_T_s=20.0)
    for a, tr in ((-1.0, neg), (2.0, dbl)):
        for name in ("v_plus", "v_minus", "rho_dev_t"):
            assert _close(getattr(tr, name), a * getattr(ref, name), 1e-10)
        for name in ("nu_plus", "nu_minus", "zeta_dev_t"):
            assert _close(getattr(tr, name), a * a * getattr(ref, name), 1e-10)


def test_batch_rows_match_single_runs(pulse):
    dirs = directions(build_noise_spec("single_mode", pulse.params, 19, 2), pulse)
    batch = integrate_batch(pulse, np.stack([d.v0 for d in dirs]), T_s=10.0, max_T_s=10.0)
    for d, tr in zip(dirs, batch):
        single = integrate_variations(pulse, d, T_s=10.0, max_T_s=10.0)
        np.testing.assert_allclose(tr.nu_plus, single.nu_plus, rtol=1e-13, atol=1e-16)


def test_matches_finite_differences_of_nonlinear_flow(pulse):
    flow = NonlinearFlow(pulse)
    v0 = 0.5 * smooth_direction(pulse)
    T = 2.0
    tr = integrate_variations(pulse, v0, T_s=T, max_T_s=T)
    n = tr.times.size - 1
    eps = 1e-3
    w_star = np.array(pulse.w_star)
    up = flow.run(w_star + eps * v0, pulse.rho_star, tr.dt, n)
    down = flow.run(w_star - eps * v0, pulse.rho_star, tr.dt, n)
    ip, im = pulse.grid.index_plus, pulse.grid.index_minus

    v_fd = (up[0] - down[0]) / (2 * eps)
    nu_fd = (up[0] + down[0] - 2 * w_star) / (2 * eps**2)
    rho_fd = (up[1] - down[1]) / (2 * eps)
    zeta_fd = (up[1] + down[1] - 2 * pulse.rho_star) / (2 * eps**2)
    scale_v = np.max(np.abs(v_fd))
    scale_nu = np.max(np.abs(nu_fd))
    assert abs(tr.v_plus[-1] - v_fd[ip]) < 1e-5 * scale_v
    assert abs(tr.v_minus[-1] - v_fd[im]) < 1e-5 * scale_v
    assert abs(tr.rho_dev_t[-1] - rho_fd) < 1e-5 * scale_v
    assert abs(tr.nu_plus[-1] - nu_fd[ip]) < 1e-5 * scale_nu
    assert abs(tr.nu_minus[-1] - nu_fd[im]) < 1e-5 * scale_nu
    assert abs(tr.zeta_dev_t[-1] - zeta_fd) < 1e-5 * scale_nu


def test_rk4_convergence_ratio(pulse):
    v0 = smooth_direction(pulse)
    dt = default_dt(pulse)
    T = 2.0

    def terminal(step):
        tr = integrate_variations(pulse, v0, dt=step, T_s=T, decay_tol=np.inf)
        return np.array([tr.v_plus[-1], tr.v_minus[-1], tr.nu_plus[-1], tr.nu_minus[-1]])

    ref = terminal(dt / 8)
    e1 = np.max(np.abs(terminal(dt) - ref))
    e2 = np.max(np.abs(terminal(dt / 2) - ref))
    assert 10 <= e1 / e2 <= 24


@pytest.mark.parametrize("kind,param,h", [
    ("scalar", None, "additive"),
    ("single_mode", 5, "additive"),
    ("custom", GAUSSIAN_A_SQ, "additive"),
    ("scalar", None, "exp_u"),
])
def test_production_directions_decay(pulse, kind, param, h):
    spec = build_noise_spec(kind, pulse.params, 19, param)
    dirs = directions(spec, pulse, h)
    traces = integrate_batch(pulse, np.stack([d.v0 for d in dirs]), T_s=100.0, max_T_s=100.0)
    for d, tr in zip(dirs, traces):
        assert tr.decayed, d.label
        assert tr.terminal_max() < 1e-8 * max(1.0, np.max(np.abs(d.v0))) ** 2
        assert tr.T_s == pytest.approx(100.0)


def test_translation_mode_decays_with_fixed_interfaces(pulse):
    # translations live in the phase variable, so this field is not neutral here
    tr = integrate_variations(pulse, pulse.dw_star, T_s=100.0)
    assert tr.decayed


def test_extension_doubles_horizon(pulse):
    v0 = smooth_direction(pulse)
    tr = integrate_variations(pulse, v0, T_s=2.0, max_T_s=8.0)
    assert not tr.decayed and tr.T_s == pytest.approx(8.0)
    assert np.all(np.diff(tr.times) > 0)
    # the continued run equals a single run over the whole horizon
    whole = integrate_variations(pulse, v0, dt=tr.dt, T_s=8.0, max_T_s=8.0)
    np.testing.assert_allclose(tr.nu_plus, whole.nu_plus, rtol=1e-12, atol=1e-15)


def test_unstable_step_raises(pulse):
    with pytest.raises(Instability):
        integrate_variations(pulse, smooth_direction(pulse), dt=20 * default_dt(pulse), T_s=50.0)


def test_csv_dump(pulse, tmp_path):
    tr = integrate_variations(pulse, smooth_direction(pulse), T_s=1.0)
    path = tmp_path / "traces.csv"
    write_traces_csv(tr, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "v_plus", "v_minus", "nu_plus", "nu_minus", "rho_dev", "zeta_dev"]
    assert len(rows) == tr.times.size + 1
    assert float(rows[-1][3]) == tr.nu_plus[-1]
