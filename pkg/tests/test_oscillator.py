import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pllt.errors import ConfigError, IntegrationDivergence
from pllt.oscillator import (MechState, OscillatorParams, SimConfig, SineForce, duffing_accel,
                             mechanical_energy, read_timeseries_csv, rk4_step, simulate,
                             steady_amplitude, write_timeseries_csv)

from conftest import linear_steady_state


def zero(t):
    return 0.0


@pytest.mark.parametrize("x, v, f, expected", [
    (0.0, 0.0, 0.0, 0.0),
    (1.0, 0.0, 0.0, -2.0),
    (0.5, 1.0, 0.2, -0.426),
])
def test_accel_substitution(duffing, x, v, f, expected):
    assert duffing_accel(MechState(x, v), f, duffing) == pytest.approx(expected, abs=1e-15)


@given(x=st.floats(-5, 5), v=st.floats(-5, 5), f=st.floats(-2, 2),
       c=st.floats(0, 1), k_nl=st.floats(-2, 2))
def test_accel_matches_equation_of_motion(x, v, f, c, k_nl):
    p = OscillatorParams(m=2.0, c=c, k=3.0, k_nl=k_nl)
    expected = (f - c * v - 3.0 * x - k_nl * x**3) / 2.0
    assert duffing_accel(MechState(x, v), f, p) == pytest.approx(expected, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("kw", [dict(m=0.0), dict(c=-1e-3), dict(k=0.0), dict(k_nl=math.nan)])
def test_params_validated(kw):
    with pytest.raises(ConfigError):
        OscillatorParams(**kw)


def test_rest_is_fixed_point(duffing):
    s = rk4_step(MechState(), zero, 0.005, duffing)
    assert (s.x, s.v, s.t) == (0.0, 0.0, 0.005)


def _period_error(dt):
    p = OscillatorParams(c=0.0, k_nl=0.0)
    n = int(round(2 * math.pi / dt))
    dt = 2 * math.pi / n
    s = MechState(1.0, 0.0)
    for _ in range(n):
        s = rk4_step(s, zero, dt, p)
    return abs(s.x - 1.0) + abs(s.v)


def test_undamped_period_returns():
    assert _period_error(1 / 200) < 1e-10


def test_fourth_order_convergence():
    ratio = _period_error(1 / 25) / _period_error(1 / 50)
    assert 14.0 < ratio < 18.0


def test_damped_free_decay_envelope():
    p = OscillatorParams(k_nl=0.0)
    zeta = p.c / (2 * math.sqrt(p.k * p.m))
    wd = math.sqrt(1 - zeta**2)
    cfg = SimConfig(f_s=200.0, duration=50 * 2 * math.pi)
    tr = simulate(MechState(1.0, 0.0), SineForce(0.0, 1.0), cfg, p)
    exact = np.exp(-zeta * tr.t) * (np.cos(wd * tr.t) + zeta / wd * np.sin(wd * tr.t))
    envelope = np.exp(-p.c * tr.t / (2 * p.m))
    assert np.max(np.abs(tr.x - exact) / envelope) < 1e-3


def test_zero_force_from_rest_stays_at_rest(duffing):
    tr = simulate(MechState(), SineForce(0.0, 1.0), SimConfig(duration=50.0), duffing)
    assert not np.any(tr.x) and not np.any(tr.v)


@pytest.mark.parametrize("omega", [0.5, 0.99, 2.0])
def test_linear_frf_after_settling(linear, omega):
    # settle window 100 / (c / 2m) as for any lightly damped linear plant
    F = 0.01
    settle = 100 / (linear.c / (2 * linear.m))
    cfg = SimConfig(f_s=200.0, duration=settle)
    tr = simulate(MechState(), SineForce(F, omega), cfg, linear, decimation=20)
    X, phi, _, _ = linear_steady_state(linear, F, omega)
    A, ph = steady_amplitude(tr, omega)
    assert A == pytest.approx(X, rel=1e-3)
    assert math.remainder(ph - phi, 2 * math.pi) == pytest.approx(0.0, abs=1e-3)


def test_forced_duffing_settles(duffing):
    omega = 3.0
    P = 2 * math.pi / omega
    cfg = SimConfig(f_s=omega / (2 * math.pi) * 128, duration=4000 * P)
    tr = simulate(MechState(), SineForce(0.5, omega), cfg, duffing)
    assert np.max(np.abs(tr.x)) < 1.0
    # forced-line amplitude in two late windows agrees: periodic steady state
    n = 128 * 50
    a1 = np.abs(np.fft.rfft(tr.x[-2 * n:-n])[50])
    a2 = np.abs(np.fft.rfft(tr.x[-n:])[50])
    assert a2 == pytest.approx(a1, rel=1e-3)


def test_deterministic(duffing):
    cfg = SimConfig(duration=100.0)
    a = simulate(MechState(0.3), SineForce(0.5, 1.3), cfg, duffing)
    b = simulate(MechState(0.3), SineForce(0.5, 1.3), cfg, duffing)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.v, b.v)


def test_compiled_path_matches_python_path(duffing):
    cfg = SimConfig(f_s=100.0, duration=30.0)
    force = SineForce(0.5, 1.3, 0.2)
    fast = simulate(MechState(0.1, -0.2), force, cfg, duffing)
    seen = []
    slow = simulate(MechState(0.1, -0.2), force, cfg, duffing, observers=[lambda *r: seen.append(r)])
    assert len(seen) == cfg.n_steps
    np.testing.assert_allclose(fast.x, slow.x, rtol=0, atol=1e-13)
    np.testing.assert_allclose(fast.f, slow.f, rtol=0, atol=1e-13)


def test_observers_called_in_order(duffing):
    order = []
    simulate(MechState(), SineForce(1.0, 1.0), SimConfig(duration=0.02), duffing,
             observers=[lambda *r: order.append("a"), lambda *r: order.append("b")])
    assert order == ["a", "b"] * 4


@settings(max_examples=25, deadline=None)
@given(x0=st.floats(-2, 2), v0=st.floats(-2, 2), c=st.floats(1e-3, 0.5))
def test_free_motion_dissipates(x0, v0, c):
    p = OscillatorParams(c=c)
    tr = simulate(MechState(x0, v0), SineForce(0.0, 1.0), SimConfig(f_s=200.0, duration=20.0), p)
    e = mechanical_energy(tr.x, tr.v, p)
    assert np.all(np.diff(e) <= 1e-9 * np.maximum(e[:-1], 1e-300))


def test_divergence_guard():
    softening = OscillatorParams(k_nl=-1.0)
    with pytest.raises(IntegrationDivergence) as err:
        simulate(MechState(5.0, 0.0), SineForce(0.0, 1.0), SimConfig(duration=50.0), softening)
    assert err.value.t is not None


def test_csv_round_trip(tmp_path, duffing):
    tr = simulate(MechState(0.2), SineForce(0.3, 1.1), SimConfig(duration=5.0), duffing)
    path = tmp_path / "ts.csv"
    write_timeseries_csv(path, tr)
    assert path.read_text().splitlines()[0] == "t,x,v,f"
    back = read_timeseries_csv(path)
    for name in ("t", "x", "v", "f"):
        assert np.array_equal(getattr(back, name), getattr(tr, name))


def test_sim_config_rejects_bad_rate():
    with pytest.raises(ConfigError):
        SimConfig(f_s=0.0)
