import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pllt.errors import ConfigError, UndefinedPhase
from pllt.harmonics import (AdaptiveFilter, FilterConfig, PhaseUnwrapper, basis_eval, fit_fourier,
                            harmonic_amplitude, harmonic_phase, lms_update, phase_lag,
                            stability_bound, wrap_angle, write_diagnostics_csv)
from pllt.oscillator import MechState, SimConfig, SineForce, simulate

from conftest import linear_steady_state, stream, tone_filter

R2 = 1 / math.sqrt(2)


@pytest.mark.parametrize("phi, N, expected", [
    (0.0, 2, [R2, 0, 1, 0, 1]),
    (math.pi / 2, 1, [R2, 1, 0]),
    (math.pi, 2, [R2, 0, -1, 0, 1]),
])
def test_basis(phi, N, expected):
    np.testing.assert_allclose(basis_eval(phi, N), expected, atol=1e-15)


def test_lms_zero_error_keeps_weights():
    z = np.array([0.0, 0.3, -0.2])
    q = basis_eval(0.0, 1)
    z2, eps = lms_update(z, -0.2, q, 1e-4)
    assert eps == 0.0 and np.array_equal(z, z2)


def test_lms_single_step():
    z2, eps = lms_update(np.zeros(3), 1.0, np.array([R2, 0.0, 1.0]), 1e-4)
    assert eps == 1.0
    np.testing.assert_allclose(z2, [1e-4 * R2, 0.0, 1e-4], rtol=1e-15)


def test_amplitude_and_phase_of_weights():
    z = np.array([0.0, 3.0, 4.0])
    assert harmonic_amplitude(z, 1) == 5.0
    assert harmonic_amplitude(np.zeros(3), 1) == 0.0
    assert harmonic_phase(np.array([0.0, 1.0, 0.0]), 1) == 0.0
    assert harmonic_phase(np.array([0.0, 0.0, 1.0]), 1) == pytest.approx(math.pi / 2)
    assert harmonic_phase(np.array([0.0, -1.0, 0.0]), 1) == pytest.approx(math.pi)


def test_zero_amplitude_phase_is_undefined():
    with pytest.raises(UndefinedPhase):
        harmonic_phase(np.zeros(5), 2)


def test_harmonic_index_checked():
    with pytest.raises(IndexError):
        harmonic_amplitude(np.zeros(5), 3)


@given(a=st.floats(-50, 50))
def test_wrap_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_phase_lag_primary():
    # x = sin(wt - pi/2), f = sin(wt)
    resp = np.array([0.0, 0.0, -1.0])
    force = np.array([0.0, 1.0, 0.0])
    assert phase_lag(resp, force, 1, 1) == pytest.approx(-math.pi / 2)


def test_phase_lag_subharmonic_bookkeeping():
    # basis at Omega = w/3: force sin(3 Omega t) on line 3, response sin(Omega t - pi/2) on line 1
    resp = np.zeros(7)
    resp[2] = -1.0
    force = np.zeros(7)
    force[5] = 1.0
    assert phase_lag(resp, force, 1, 3) == pytest.approx(-math.pi / 2)


def test_unwrapper_minimises_jumps():
    u = PhaseUnwrapper(anchor=-3.0)
    first = u(3.1)  # placed within pi of the anchor
    assert first == pytest.approx(3.1 - 2 * math.pi)
    out = [first] + [u(wrap_angle(a)) for a in np.linspace(-3.2, -9.0, 50)]
    assert np.max(np.abs(np.diff(out))) < math.pi
    assert out[-1] == pytest.approx(-9.0)


def test_pure_tone_recovery():
    w, fs = 1.0, 200.0
    t = np.arange(1, int(200 * 2 * math.pi / w * fs) + 1) / fs
    filt = stream(tone_filter(), 0.7 * np.sin(w * t + 0.3), w * t)
    assert filt.amplitude(1) == pytest.approx(0.7, abs=1e-5)
    assert filt.phase(1) == pytest.approx(0.3, abs=1e-5)


@settings(max_examples=6, deadline=None)
@given(amps=st.lists(st.floats(0.05, 2.0), min_size=3, max_size=3),
       phases=st.lists(st.floats(-3.1, 3.1), min_size=3, max_size=3),
       dc=st.floats(-0.5, 0.5), mu=st.sampled_from([1e-4, 1e-3]))
def test_span_recovery(amps, phases, dc, mu):
    # every weight mode relaxes with time constant 2 / mu samples; settle 20 of them
    w, fs = 1.3, 200.0
    t = np.arange(1, int(20 * 2 / mu) + 1) / fs
    x = dc * R2 + sum(a * np.sin((j + 1) * w * t + p) for j, (a, p) in enumerate(zip(amps, phases)))
    filt = stream(tone_filter(N=3, mu=mu), x, w * t)
    for j, (a, p) in enumerate(zip(amps, phases), start=1):
        assert filt.amplitude(j) == pytest.approx(a, abs=1e-5)
        assert math.remainder(filt.phase(j) - p, 2 * math.pi) == pytest.approx(0.0, abs=1e-5 / a)
    # reconstruction of the steady input
    tail = slice(-2000, None)
    rec = filt.reconstruct(w * t[tail])
    assert np.sqrt(np.mean((rec - x[tail]) ** 2) / np.mean(x[tail] ** 2)) < 1e-4


@pytest.mark.parametrize("fs", [200.0, 1000.0])
def test_table_step_size_is_stable(fs):
    # broadband input: weights must stay bounded
    rng = np.random.default_rng(0)
    w = 1.0
    t = np.arange(1, 100001) / fs
    filt = stream(tone_filter(N=5), rng.normal(size=t.size), w * t)
    assert np.all(np.isfinite(filt.z)) and np.max(np.abs(filt.z)) < 1.0
    assert 1e-4 < stability_bound()


def test_step_size_bound_enforced():
    with pytest.raises(ConfigError):
        FilterConfig(mu=stability_bound())


def test_linear_plant_at_resonance_lags_quarter_period(linear):
    F, w, fs = 1e-3, linear.omega_l, 200.0
    _, _, x0, v0 = linear_steady_state(linear, F, w)
    n = int(300 * 2 * math.pi / w * fs)
    tr = simulate(MechState(x0, v0), SineForce(F, w), SimConfig(f_s=fs, duration=n / fs), linear)
    rx = stream(tone_filter(), tr.x[1:], w * tr.t[1:])
    rf = stream(tone_filter(), tr.f[1:], w * tr.t[1:])
    assert phase_lag(rx.z, rf.z, 1, 1) == pytest.approx(-math.pi / 2, abs=1e-3)


def test_chirp_tracking():
    # carrier phase from integrated frequency; 1 % rise per 100 periods
    fs, w0 = 200.0, 1.0
    n = int(400 * 2 * math.pi / w0 * fs)
    t = np.arange(1, n + 1) / fs
    rate = 0.01 * w0 / (100 * 2 * math.pi / w0)
    theta = w0 * t + 0.5 * rate * t**2
    x = 0.5 * np.sin(theta + 0.4)
    filt = tone_filter()
    err = []
    for i, (s, th) in enumerate(zip(x, theta)):
        filt.update(float(s), float(th))
        if i > n // 4:
            err.append(math.remainder(filt.phase(1) - 0.4, 2 * math.pi))
    assert max(abs(e) for e in err) < 0.01


def test_fit_fourier_matches_generator():
    phi = np.linspace(0, 4 * math.pi, 400, endpoint=False)
    x = 0.2 * R2 + 0.5 * np.sin(phi) - 0.1 * np.cos(3 * phi)
    z = fit_fourier(x, phi, 3)
    np.testing.assert_allclose(z, [0.2, 0.5, 0, 0, 0, 0, -0.1], atol=1e-12)


def test_diagnostics_csv(tmp_path):
    z = np.array([[0.0, 3.0, 4.0], [0.0, 0.0, 0.0]])
    path = tmp_path / "d.csv"
    write_diagnostics_csv(path, [0.0, 0.1], [0.5, 0.0], z)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "epsilon", "A_1", "Phi_1"]
    assert float(rows[1][2]) == 5.0 and rows[2][3] == "nan"


def test_filter_weight_length_checked():
    with pytest.raises(ValueError):
        AdaptiveFilter(FilterConfig(N=2), z=np.zeros(3))
