import math

import numpy as np
import pytest

from conftest import GAUSSIAN_A_SQ, SIGMAS
from kinephase.errors import NotDecayed
from kinephase.noise import NoiseKind, NoiseSpec, build_noise_spec, directions
from kinephase.phase import (
    SolverConfig,
    diffusion_coefficient,
    drift_contribution,
    predicted_deviation,
    predicted_mean_rate,
    predicted_stats,
    reduce,
)
from kinephase.variation import VariationTraces, integrate_variations


@pytest.fixture(scope="module")
def scalar(pulse):
    return reduce(pulse, build_noise_spec("scalar", pulse.params, 19))


@pytest.fixture(scope="module")
def mode5(pulse):
    return reduce(pulse, build_noise_spec("single_mode", pulse.params, 19, 5))


def _zero_traces(n=50, decayed=True):
    z = np.zeros(n + 1)
    return VariationTraces(np.arange(n + 1) * 0.1, z, z, z, z, z, z, decayed)


def test_zero_traces_give_zero(pulse):
    tr = _zero_traces()
    assert diffusion_coefficient(tr, pulse, 0.7) == 0.0
    assert drift_contribution(tr, tr, pulse, 0.7) == 0.0


def test_undecayed_traces_rejected(pulse):
    tr = _zero_traces(decayed=False)
    with pytest.raises(NotDecayed):
        diffusion_coefficient(tr, pulse, 1.0)
    with pytest.raises(NotDecayed):
        drift_contribution(_zero_traces(), tr, pulse, 1.0)


def test_quadrature_scaling_and_parity(pulse):
    (d,) = directions(build_noise_spec("single_mode", pulse.params, 19, 1), pulse)[:1]
    v0 = d.v0
    tr = integrate_variations(pulse, v0)
    tr2 = integrate_variations(pulse, 2 * v0)
    neg = integrate_variations(pulse, -v0)
    s = diffusion_coefficient(tr, pulse, 1.0)
    assert diffusion_coefficient(tr2, pulse, 1.0) == pytest.approx(2 * s, rel=1e-10)
    assert diffusion_coefficient(tr, pulse, 0.5) == pytest.approx(0.5 * s, rel=1e-14)
    r = drift_contribution(tr, None, pulse, 1.0)
    assert drift_contribution(neg, None, pulse, 1.0) == pytest.approx(r, rel=1e-10)


def test_drift_contribution_matches_reduce(pulse, mode5):
    cos, sin = directions(build_noise_spec("single_mode", pulse.params, 19, 5), pulse)
    # same horizon and step as the reduction run
    T = mode5.meta["T_s"]
    tc = integrate_variations(pulse, cos, dt=mode5.meta["dt"], T_s=T, max_T_s=T)
    ts = integrate_variations(pulse, sin, dt=mode5.meta["dt"], T_s=T, max_T_s=T)
    assert drift_contribution(tc, ts, pulse, 1.0) == pytest.approx(mode5.R[5], rel=1e-12)
    assert diffusion_coefficient(ts, pulse, 1.0) == pytest.approx(mode5.S_diff[1], rel=1e-12)


def test_coefficient_invariants(scalar, mode5):
    for c in (scalar, mode5):
        assert c.nu_sq >= 0 and c.nu_sq == float(np.sum(c.S_diff**2))
        assert c.mu == c.S_drift == 0.5 * math.fsum(c.R.values())
        assert np.all(np.isfinite(c.S_diff))
    assert scalar.labels == ((0, "cos"),)
    assert mode5.labels == ((5, "cos"), (5, "sin"))
    assert scalar.meta["n_trunc"] == 0 and scalar.meta["nodes"] == 163


def test_sign_trend(scalar, mode5):
    assert scalar.mu > 0
    assert mode5.mu < 0


def test_scalar_diffusion_coefficient(scalar):
    # the computed value, confirmed by the Monte Carlo spread
    (s0,) = scalar.S_diff
    assert s0 < 0
    assert abs(s0) == pytest.approx(5.7, rel=0.1)


def test_sigma_factorization(scalar):
    s1, s2 = SIGMAS[0], SIGMAS[3]
    ratio = predicted_mean_rate(scalar, s1) / predicted_mean_rate(scalar, s2)
    assert ratio == pytest.approx((s1 / s2) ** 2, rel=1e-15)
    dev = predicted_deviation(scalar, s1, 64.0) / predicted_deviation(scalar, s2, 64.0)
    assert dev == pytest.approx(s1 / s2, rel=1e-15)


def test_predicted_stats(scalar):
    assert predicted_stats(scalar, 0.0, 10.0, 1.5) == (1.5, 0.0)
    m1, v1 = predicted_stats(scalar, 0.1, 10.0, 1.5)
    m2, v2 = predicted_stats(scalar, math.sqrt(2) * 0.1, 10.0, 1.5)
    assert m2 - 1.5 == pytest.approx(2 * (m1 - 1.5), rel=1e-14)
    assert v2 == pytest.approx(2 * v1, rel=1e-14)
    assert predicted_deviation(scalar, 0.1, 10.0) == pytest.approx(math.sqrt(v1) / 10.0, rel=1e-14)
    with pytest.raises(ValueError):
        predicted_stats(scalar, 0.1, -1.0)


def test_coefficient_scaling(pulse):
    base = build_noise_spec("custom", pulse.params, 4, [0.5, 0.3, 0.2])
    scaled = NoiseSpec(NoiseKind.CUSTOM, 3.0 * base.a, base.n_trunc)
    a, b = reduce(pulse, base), reduce(pulse, scaled)
    np.testing.assert_allclose(b.S_diff, 3.0 * a.S_diff, rtol=1e-12)
    assert b.S_drift == pytest.approx(9.0 * a.S_drift, rel=1e-12)


def test_dt_halving_changes_little(pulse):
    spec = build_noise_spec("single_mode", pulse.params, 19, 2)
    a = reduce(pulse, spec)
    b = reduce(pulse, spec, config=SolverConfig(cfl=0.2))
    assert abs(b.mu - a.mu) < 1e-3 * abs(a.mu)
    assert abs(b.nu_sq - a.nu_sq) < 1e-3 * a.nu_sq


def test_deterministic_across_workers(pulse):
    spec = build_noise_spec("custom", pulse.params, 10, GAUSSIAN_A_SQ).truncated(4)
    a = reduce(pulse, spec)
    b = reduce(pulse, spec)
    c = reduce(pulse, spec, config=SolverConfig(workers=2))
    for other in (b, c):
        np.testing.assert_array_equal(other.S_diff, a.S_diff)
        assert other.S_drift == a.S_drift and other.nu_sq == a.nu_sq


def test_guard_trips_on_short_horizon(pulse):
    spec = build_noise_spec("scalar", pulse.params, 19)
    with pytest.raises(NotDecayed):
        reduce(pulse, spec, config=SolverConfig(T_s=2.0, max_T_s=2.0))


def test_to_dict(scalar):
    d = scalar.to_dict()
    assert d["S_diff"][0]["parity"] == "cos" and d["mu"] == scalar.mu
    assert d["R"]["0"] == scalar.R[0]
