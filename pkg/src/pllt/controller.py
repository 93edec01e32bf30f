"""Phase-locked loop: phase detector, PI frequency law, VCO and force-magnitude loop.

The excitation is ``f = F sin(theta)`` with ``theta`` the running integral of
the instantaneous frequency.  The frequency obeys

    omega = omega_o + K_P e + K_I int(e) dt,   e = Phi_meas - Phi_ref

where ``Phi_meas`` is the unwrapped lag between response harmonic ``kappa``
and force harmonic ``upsilon`` delivered by the adaptive filters.
"""
from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .errors import (ConfigError, FilterDivergence, IntegrationDivergence,
                     LoopFailure, RunFailure, UndefinedPhase)
from .harmonics import FilterConfig
from .oscillator import X_MAX, MechState, OscillatorParams

OMEGA_FLOOR = 1e-3
OMEGA_MAX_FACTOR = 10.0


@dataclass(frozen=True)
class PIGains:
    kp: float
    ki: float

    def __post_init__(self):
        for name in ("kp", "ki"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0:
                raise ConfigError("gain must be finite and >= 0", key=f"controller.{name}")


@dataclass(frozen=True)
class ControllerState:
    omega_o: float
    phase_ref: float
    F: float
    gains: PIGains
    kappa: int = 1
    upsilon: int = 1
    omega: float = None
    theta: float = 0.0
    e_int: float = 0.0

    def __post_init__(self):
        if self.omega is None:
            object.__setattr__(self, "omega", self.omega_o)
        if not self.omega_o > 0:
            raise ConfigError("open-loop frequency must be > 0", key="controller.omega0")
        if self.F < 0:
            raise ConfigError("force amplitude must be >= 0", key="controller.force_amp")
        if self.kappa < 1 or self.upsilon < 1:
            raise ConfigError("harmonic indices must be >= 1", key="controller.kappa")

    @property
    def e_int_max(self) -> float:
        """Anti-windup bound on the integrated error, from omega_max = 10 omega_o."""
        if self.gains.ki == 0:
            return math.inf
        return (OMEGA_MAX_FACTOR - 1.0) * self.omega_o / self.gains.ki


def vco_step(state: ControllerState, dt: float) -> tuple[float, ControllerState]:
    """Advance the oscillator phase by ``omega dt`` and emit ``F sin(theta)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if state.omega <= 0:
        raise LoopFailure("frequency collapsed")
    theta = state.theta + state.omega * dt
    return state.F * math.sin(theta), replace(state, theta=theta)


def pi_update(state: ControllerState, phase_meas: float, dt: float) -> ControllerState:
    """Integral-form PI law on the unwrapped measured lag."""
    e = phase_meas - state.phase_ref
    lim = state.e_int_max
    e_int = min(max(state.e_int + e * dt, -lim), lim)
    omega = state.omega_o + state.gains.kp * e + state.gains.ki * e_int
    return replace(state, e_int=e_int, omega=omega)


@dataclass(frozen=True)
class AmplitudeLoopState:
    """Force-magnitude PI loop acting on the commanded VCO amplitude."""

    F_o: float
    A_cmd: float
    gains: PIGains = PIGains(0.01, 0.01)
    e_prev: float = 0.0

    def __post_init__(self):
        if not self.F_o > 0:
            raise ConfigError("target force magnitude must be > 0", key="amplitude.f_target")
        if not self.A_cmd > 0:
            raise ConfigError("commanded amplitude must be > 0", key="amplitude.a_cmd")

    @property
    def floor(self) -> float:
        return 1e-6 * self.F_o


def amplitude_control_step(state: AmplitudeLoopState, A_f: float, dt: float) -> AmplitudeLoopState:
    """Incremental PI: A_cmd += K_P (e - e_prev) + K_I e dt with e = F_o - A_f."""
    e = state.F_o - A_f
    cmd = state.A_cmd + state.gains.kp * (e - state.e_prev) + state.gains.ki * e * dt
    return replace(state, A_cmd=max(cmd, state.floor), e_prev=e)


@dataclass(frozen=True)
class Actuator:
    """Static-gain actuator with optional harmonic distortion.

    Applied force = gain * A_cmd * (sin(theta) + sum(rel * sin(order * theta))).
    """

    gain: float = 1.0
    distortion: tuple = ()

    def __post_init__(self):
        if not self.gain > 0:
            raise ConfigError("actuator gain must be > 0", key="actuator.gain")
        for order, _ in self.distortion:
            if order < 2:
                raise ConfigError("distortion orders must be >= 2", key="actuator.distortion")


@dataclass(frozen=True)
class LockPolicy:
    """Lock certificate: |Phi - Phi_ref| < tol continuously for ``hold_periods`` excitation periods."""

    tol: float = math.radians(0.5)
    hold_periods: float = 50.0
    grace_periods: float = 20.0
    warmup_periods: float = 0.0


@dataclass
class RunLog:
    t: np.ndarray
    omega: np.ndarray
    phase_lag: np.ndarray
    x: np.ndarray
    v: np.ndarray
    f: np.ndarray
    locked: np.ndarray
    theta: np.ndarray
    force_amp: np.ndarray
    A: np.ndarray

    @classmethod
    def empty(cls, n_harm):
        z = np.empty(0)
        return cls(z, z, z, z, z, z, np.empty(0, bool), z, z, np.empty((0, n_harm)))

    @classmethod
    def from_arrays(cls, log, amps):
        return cls(log[:, K.L_T].copy(), log[:, K.L_OMEGA].copy(), log[:, K.L_PHASE].copy(),
                   log[:, K.L_X].copy(), log[:, K.L_V].copy(), log[:, K.L_F].copy(),
                   log[:, K.L_LOCKED] > 0.5, log[:, K.L_THETA].copy(), log[:, K.L_AF].copy(),
                   amps.copy())

    def __len__(self):
        return self.t.size

    def concat(self, other: "RunLog") -> "RunLog":
        return RunLog(*(np.concatenate([getattr(self, f), getattr(other, f)])
                        for f in ("t", "omega", "phase_lag", "x", "v", "f", "locked",
                                  "theta", "force_amp", "A")))

    def to_csv(self, path) -> None:
        n = self.A.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "omega", "phase_lag"] + [f"A{j}" for j in range(1, n + 1)]
                       + ["x", "f", "locked", "theta"])
            for i in range(self.t.size):
                w.writerow([repr(float(self.t[i])), repr(float(self.omega[i])),
                            repr(float(self.phase_lag[i]))]
                           + [repr(float(a)) for a in self.A[i]]
                           + [repr(float(self.x[i])), repr(float(self.f[i])), int(self.locked[i]),
                              repr(float(self.theta[i]))])


_FAILURES = {
    K.DIVERGED: (IntegrationDivergence, "plant state diverged"),
    K.FILTER_DIVERGED: (FilterDivergence, "adaptive filter diverged"),
    K.LOOP_FAILURE: (LoopFailure, "frequency collapsed below floor"),
    K.UNDEFINED_PHASE: (UndefinedPhase, "phase lag undefined (zero harmonic amplitude)"),
}


class PLLRig:
    """Virtual test rig: Duffing plant under phase-locked-loop control.

    The rig keeps its complete state between calls to :meth:`run`, so
    sweeps can change set-points and continue from the current motion.
    """

    def __init__(self, plant: OscillatorParams, controller: ControllerState,
                 filt: FilterConfig, f_s: float, lock: LockPolicy = LockPolicy(),
                 initial: MechState = MechState(), amplitude_loop: AmplitudeLoopState | None = None,
                 actuator: Actuator | None = None):
        if not f_s > 0:
            raise ConfigError("sampling frequency must be > 0", key="sim.f_s")
        if filt.upsilon != controller.upsilon:
            raise ConfigError("filter and controller disagree on upsilon", key="filter.upsilon")
        if controller.kappa > filt.N or controller.upsilon > filt.N:
            raise ConfigError("filter order N must cover kappa and upsilon", key="filter.n")
        if amplitude_loop is not None and actuator is None:
            actuator = Actuator()
        self.plant = plant
        self.filt = filt
        self.f_s = float(f_s)
        self.dt = 1.0 / self.f_s
        self.lock = lock
        self.kappa = controller.kappa
        self.upsilon = controller.upsilon
        self.actuator = actuator or Actuator()
        self.steps = 0

        self._plant = plant.as_array()
        self._mech = np.array([initial.x, initial.v, initial.t], dtype=float)
        c = np.zeros(K.C_SIZE)
        c[K.C_OMEGA_O] = controller.omega_o
        c[K.C_OMEGA] = controller.omega
        c[K.C_THETA] = controller.theta
        c[K.C_EINT] = controller.e_int
        c[K.C_PREF] = c[K.C_PREF_TGT] = controller.phase_ref
        c[K.C_F] = c[K.C_F_TGT] = controller.F
        c[K.C_KP] = controller.gains.kp
        c[K.C_KI] = controller.gains.ki
        c[K.C_EINT_MAX] = controller.e_int_max
        self._ctrl = c
        self._zx = np.zeros(filt.size)
        self._zf = np.zeros(filt.size)
        self._q = np.empty(filt.size)
        a = np.zeros(K.A_SIZE)
        a[K.A_GAIN] = self.actuator.gain
        if amplitude_loop is not None:
            a[K.A_ON] = 1.0
            a[K.A_FO] = amplitude_loop.F_o
            a[K.A_CMD] = amplitude_loop.A_cmd
            a[K.A_KP] = amplitude_loop.gains.kp
            a[K.A_KI] = amplitude_loop.gains.ki
            a[K.A_EPREV] = amplitude_loop.e_prev
            a[K.A_FLOOR] = amplitude_loop.floor
        self._amp = a
        self._dist_orders = np.array([o for o, _ in self.actuator.distortion], dtype=float)
        self._dist_rel = np.array([r for _, r in self.actuator.distortion], dtype=float)
        self._ctrl[K.C_SHAPE] = self._shape(controller.theta)
        self._refresh_opts()

    def _shape(self, theta):
        return math.sin(theta) + sum(r * math.sin(o * theta)
                                     for o, r in zip(self._dist_orders, self._dist_rel))

    def _refresh_opts(self):
        o = np.zeros(K.O_SIZE)
        o[K.O_TOL] = self.lock.tol
        o[K.O_HOLD] = self.lock.hold_periods
        o[K.O_GRACE] = self.lock.grace_periods * 2 * math.pi / self._ctrl[K.C_OMEGA_O]
        o[K.O_OMEGA_FLOOR] = OMEGA_FLOOR
        o[K.O_XMAX] = X_MAX
        o[K.O_WARMUP] = round(self.lock.warmup_periods * 2 * math.pi / self._ctrl[K.C_OMEGA_O] * self.f_s)
        self._opts = o

    def copy(self) -> "PLLRig":
        return copy.deepcopy(self)

    # -- state views -----------------------------------------------------
    @property
    def t(self) -> float:
        return float(self._mech[2])

    @property
    def mech(self) -> MechState:
        return MechState(*map(float, self._mech))

    @property
    def omega(self) -> float:
        return float(self._ctrl[K.C_OMEGA])

    @property
    def theta(self) -> float:
        return float(self._ctrl[K.C_THETA])

    @property
    def phase_ref(self) -> float:
        return float(self._ctrl[K.C_PREF])

    @property
    def force_amp(self) -> float:
        """Amplitude currently driving the VCO output (actuator output when the magnitude loop is on)."""
        if self._amp[K.A_ON]:
            return float(self._amp[K.A_GAIN] * self._amp[K.A_CMD])
        return float(self._ctrl[K.C_F])

    @property
    def commanded_amp(self) -> float:
        return float(self._amp[K.A_CMD])

    @property
    def phase_lag(self) -> float:
        """Latest unwrapped lag estimate (nan before the phase is first defined)."""
        return float(self._ctrl[K.C_UNWRAP]) if self._ctrl[K.C_HAVE] else math.nan

    @property
    def lock_time(self) -> float:
        return float(self._ctrl[K.C_LOCK_T])

    @property
    def locked(self) -> bool:
        return self.omega > 0 and self.lock_time >= self.lock.hold_periods * 2 * math.pi / self.omega

    @property
    def response_weights(self) -> np.ndarray:
        return self._zx.copy()

    @property
    def force_weights(self) -> np.ndarray:
        return self._zf.copy()

    def amplitudes(self) -> np.ndarray:
        return np.hypot(self._zx[1::2], self._zx[2::2])

    def controller_state(self) -> ControllerState:
        c = self._ctrl
        return ControllerState(omega_o=float(c[K.C_OMEGA_O]), phase_ref=float(c[K.C_PREF]),
                               F=float(c[K.C_F]), gains=PIGains(float(c[K.C_KP]), float(c[K.C_KI])),
                               kappa=self.kappa, upsilon=self.upsilon, omega=float(c[K.C_OMEGA]),
                               theta=float(c[K.C_THETA]), e_int=float(c[K.C_EINT]))

    # -- set-points ------------------------------------------------------
    def set_phase_ref(self, value: float, ramp_time: float = 0.0) -> None:
        self._set(K.C_PREF, K.C_PREF_TGT, K.C_PREF_RATE, value, ramp_time)
        self._ctrl[K.C_LOCK_T] = 0.0

    def set_force(self, value: float, ramp_time: float = 0.0) -> None:
        if value < 0:
            raise ConfigError("force amplitude must be >= 0", key="controller.force_amp")
        self._set(K.C_F, K.C_F_TGT, K.C_F_RATE, value, ramp_time)
        self._ctrl[K.C_LOCK_T] = 0.0

    def set_gains(self, gains: PIGains) -> None:
        """Change gains bumplessly: the integrator is rescaled so omega is unchanged."""
        c = self._ctrl
        if gains.ki > 0:
            c[K.C_EINT] = c[K.C_EINT] * c[K.C_KI] / gains.ki
        c[K.C_KP] = gains.kp
        c[K.C_KI] = gains.ki
        c[K.C_EINT_MAX] = math.inf if gains.ki == 0 else (
            (OMEGA_MAX_FACTOR - 1.0) * c[K.C_OMEGA_O] / gains.ki)
        c[K.C_EINT] = min(max(c[K.C_EINT], -c[K.C_EINT_MAX]), c[K.C_EINT_MAX])

    def _set(self, i_cur, i_tgt, i_rate, value, ramp_time):
        c = self._ctrl
        c[i_tgt] = value
        n = ramp_time * self.f_s
        if n >= 1:
            c[i_rate] = (value - c[i_cur]) / n
        else:
            c[i_cur] = value
            c[i_rate] = 0.0

    # -- integration -----------------------------------------------------
    def run(self, duration: float, decimation: int = 1) -> RunLog:
        """Advance by ``duration`` seconds; returns the decimated log.

        Failures raise a :class:`RunFailure` subclass whose ``log`` attribute
        holds everything recorded up to the failure.
        """
        n = int(round(duration * self.f_s))
        return self.run_steps(n, decimation)

    def run_steps(self, n: int, decimation: int = 1) -> RunLog:
        if decimation < 1:
            raise ValueError("decimation must be >= 1")
        rows = n // decimation + 1
        log = np.empty((rows, K.L_SIZE))
        amps = np.empty((rows, self.filt.N))
        status, done, written = K.closed_loop_run(
            n, self.dt, self._plant, self._mech, self._ctrl, self._zx, self._zf, self._q,
            self.filt.N, self.kappa, self.upsilon, self.filt.mu, self._amp,
            self._dist_orders, self._dist_rel, self._opts, self.steps, decimation, log, amps)
        self.steps += done
        out = RunLog.from_arrays(log[:written], amps[:written])
        if status != K.OK:
            cls, msg = _FAILURES[status]
            exc = cls(msg, t=float(self._mech[2]))
            exc.log = out
            raise exc
        return out


def run_closed_loop(plant: OscillatorParams, controller: ControllerState, filt: FilterConfig,
                    f_s: float, duration: float, lock: LockPolicy = LockPolicy(),
                    initial: MechState = MechState(), decimation: int = 1,
                    amplitude_loop: AmplitudeLoopState | None = None,
                    actuator: Actuator | None = None) -> RunLog:
    """One closed-loop run from ``initial``; see :class:`PLLRig` for the step order."""
    rig = PLLRig(plant, controller, filt, f_s, lock=lock, initial=initial,
                 amplitude_loop=amplitude_loop, actuator=actuator)
    return rig.run(duration, decimation)


__all__ = [
    "PIGains", "ControllerState", "AmplitudeLoopState", "Actuator", "LockPolicy", "RunLog",
    "PLLRig", "vco_step", "pi_update", "amplitude_control_step", "run_closed_loop",
    "RunFailure",
]
