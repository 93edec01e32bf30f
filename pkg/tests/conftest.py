import math

import numpy as np
import pytest

from pllt.harmonics import AdaptiveFilter, FilterConfig
from pllt.oscillator import OscillatorParams


@pytest.fixture
def duffing():
    return OscillatorParams()


@pytest.fixture
def linear():
    return OscillatorParams(k_nl=0.0)


def stream(filt: AdaptiveFilter, signal, theta) -> AdaptiveFilter:
    """Feed samples ``signal[i]`` taken at carrier phases ``theta[i]``."""
    for s, th in zip(signal, theta):
        filt.update(float(s), float(th))
    return filt


def tone_filter(N=3, upsilon=1, mu=1e-4):
    return AdaptiveFilter(FilterConfig(N=N, upsilon=upsilon, mu=mu))


def linear_steady_state(p: OscillatorParams, F: float, omega: float):
    """Closed-form steady response X sin(omega t + phi) of the linear plant, and (x0, v0)."""
    h = F * p.linear_frf(omega)
    X, phi = abs(h), math.atan2(h.imag, h.real)
    return X, phi, X * math.sin(phi), X * omega * math.cos(phi)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running closed-loop or basin runs")
    np.seterr(all="raise", under="ignore")


# acceptance criterion number -> one-line verdict, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
