"""Single-degree-of-freedom Duffing plant and its fixed-step integrator.

The plant obeys ``m x'' + c x' + k x + k_nl x**3 = f(t)``.  Integration is
classical RK4 at a constant step; the external force is sampled at the
start, middle and end of every step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigError, IntegrationDivergence

#: Displacement beyond which a run is declared divergent (m).
X_MAX = 1e6


@dataclass(frozen=True)
class OscillatorParams:
    """Physical coefficients of the plant (SI units)."""

    m: float = 1.0
    c: float = 0.001
    k: float = 1.0
    k_nl: float = 1.0

    def __post_init__(self):
        for name in ("m", "c", "k", "k_nl"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError("must be finite", key=f"oscillator.{name}")
        if self.m <= 0:
            raise ConfigError("mass must be > 0", key="oscillator.m")
        if self.c < 0:
            raise ConfigError("damping must be >= 0", key="oscillator.c")
        if self.k <= 0:
            raise ConfigError("linear stiffness must be > 0", key="oscillator.k")

    @property
    def omega_l(self) -> float:
        """Linear natural frequency sqrt(k/m)."""
        return math.sqrt(self.k / self.m)

    def as_array(self) -> np.ndarray:
        return np.array([self.m, self.c, self.k, self.k_nl], dtype=float)

    def linear_frf(self, omega: float) -> complex:
        """Receptance X/F of the underlying linear system at ``omega``."""
        return 1.0 / (self.k - self.m * omega**2 + 1j * self.c * omega)


@dataclass(frozen=True)
class MechState:
    x: float = 0.0
    v: float = 0.0
    t: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    f_s: float = 200.0
    duration: float = 100.0

    def __post_init__(self):
        if not (self.f_s > 0 and math.isfinite(self.f_s)):
            raise ConfigError("sampling frequency must be > 0", key="sim.f_s")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ConfigError("duration must be > 0", key="sim.duration")

    @property
    def dt(self) -> float:
        return 1.0 / self.f_s

    @property
    def n_steps(self) -> int:
        return int(round(self.duration * self.f_s))


@dataclass(frozen=True)
class SineForce:
    """f(t) = F sin(omega t + phase). Recognised by :func:`simulate` for a compiled fast path."""

    F: float
    omega: float
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        return self.F * math.sin(self.omega * t + self.phase)


def duffing_accel(state: MechState, f: float, p: OscillatorParams) -> float:
    """Acceleration (f - c v - k x - k_nl x^3) / m."""
    return K.duffing_accel(state.x, state.v, f, p.m, p.c, p.k, p.k_nl)


def rk4_step(state: MechState, force_fn: Callable[[float], float], dt: float,
             p: OscillatorParams) -> MechState:
    """One classical Runge-Kutta step of size ``dt``.

    Raises :class:`IntegrationDivergence` if the new state is not finite or
    the displacement exceeds :data:`X_MAX`.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    t = state.t
    x, v = K.rk4_update(state.x, state.v, dt, force_fn(t), force_fn(t + 0.5 * dt),
                        force_fn(t + dt), p.m, p.c, p.k, p.k_nl)
    t_new = t + dt
    if not (math.isfinite(x) and math.isfinite(v)) or abs(x) > X_MAX:
        raise IntegrationDivergence("plant state diverged", t=t_new)
    return MechState(x, v, t_new)


@dataclass
class Trajectory:
    """Sampled time series; columns follow the CSV layout ``t,x,v,f``."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    f: np.ndarray

    def __len__(self):
        return self.t.size

    def to_csv(self, path, decimation: int = 1) -> None:
        write_timeseries_csv(path, self, decimation)


Observer = Callable[[float, float, float, float], None]


def simulate(initial: MechState, force_fn: Callable[[float], float], cfg: SimConfig,
             p: OscillatorParams, observers: Sequence[Observer] = (),
             decimation: int = 1) -> Trajectory:
    """Integrate from ``initial`` for ``cfg.duration`` seconds.

    Observers are called as ``obs(t, x, v, f)`` once after every step, in
    the order given.  With a :class:`SineForce` and no observers the loop
    runs compiled; both paths are deterministic.
    """
    if decimation < 1:
        raise ValueError("decimation must be >= 1")
    n = cfg.n_steps
    dt = cfg.dt
    if isinstance(force_fn, SineForce) and not observers:
        mech = np.array([initial.x, initial.v, initial.t], dtype=float)
        out = np.empty((n // decimation + 1, 4))
        status, _, rows = K.sine_run(mech, dt, n, force_fn.F, force_fn.omega,
                                     force_fn.phase, p.as_array(), X_MAX, decimation, out)
        if status != K.OK:
            raise IntegrationDivergence("plant state diverged", t=float(mech[2]))
        out = out[:rows]
        return Trajectory(out[:, 0].copy(), out[:, 1].copy(), out[:, 2].copy(), out[:, 3].copy())

    rows = [(initial.t, initial.x, initial.v, force_fn(initial.t))]
    state = initial
    for i in range(n):
        state = rk4_step(state, force_fn, dt, p)
        f = force_fn(state.t)
        for obs in observers:
            obs(state.t, state.x, state.v, f)
        if (i + 1) % decimation == 0:
            rows.append((state.t, state.x, state.v, f))
    arr = np.asarray(rows, dtype=float)
    return Trajectory(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def mechanical_energy(x, v, p: OscillatorParams):
    return 0.5 * p.m * np.square(v) + 0.5 * p.k * np.square(x) + 0.25 * p.k_nl * np.power(x, 4)


def write_timeseries_csv(path, traj: Trajectory, decimation: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "v", "f"])
        for row in zip(traj.t[::decimation], traj.x[::decimation],
                       traj.v[::decimation], traj.f[::decimation]):
            w.writerow([repr(float(val)) for val in row])


def read_timeseries_csv(path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def steady_amplitude(traj: Trajectory, omega: float, n_periods: int = 20) -> tuple[float, float]:
    """Amplitude and phase (sine convention) of the ``omega`` line over the last periods.

    Least-squares fit of ``a sin(omega t) + b cos(omega t) + d`` to the tail.
    """
    period = 2 * math.pi / omega
    mask = traj.t >= traj.t[-1] - n_periods * period
    t = traj.t[mask]
    basis = np.column_stack([np.sin(omega * t), np.cos(omega * t), np.ones_like(t)])
    (a, b, _), *_ = np.linalg.lstsq(basis, traj.x[mask], rcond=None)
    return math.hypot(a, b), math.atan2(b, a)

