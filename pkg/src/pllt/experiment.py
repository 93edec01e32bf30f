"""Virtual experiments on the phase-locked rig.

Everything here drives :class:`~pllt.controller.PLLRig` through set-point
schedules: phase sweeps at fixed force (frequency response curves), force
sweeps at the resonant phase (backbones), transfers from rest onto
secondary branches, and open-loop basin scans.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from . import presets
from .controller import ControllerState, LockPolicy, PIGains, PLLRig, RunLog
from .errors import ConfigError, RunFailure
from .oscillator import X_MAX, MechState, OscillatorParams

DISPLACEMENT = "displacement"
ACCELERATION = "acceleration"

MAIN = "main"
ISOLA = "isola"
UNRESOLVED = "unresolved"
DIVERGED = "diverged"
_LABELS = {0: MAIN, 1: ISOLA, 2: UNRESOLVED, 3: DIVERGED}

CAPTURED = "captured"
NOT_CAPTURED = "not_captured"


@dataclass(frozen=True)
class ResonanceSpec:
    """Target resonance kappa:upsilon; the pair is stored gcd-reduced."""

    kappa: int = 1
    upsilon: int = 1
    signal_kind: str = DISPLACEMENT

    def __post_init__(self):
        for name in ("kappa", "upsilon"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ConfigError("resonance indices must be positive integers",
                                  key=f"controller.{name}")
        if self.signal_kind not in (DISPLACEMENT, ACCELERATION):
            raise ConfigError(f"unknown signal kind {self.signal_kind!r}", key="signal_kind")
        g = math.gcd(int(self.kappa), int(self.upsilon))
        object.__setattr__(self, "kappa", int(self.kappa) // g)
        object.__setattr__(self, "upsilon", int(self.upsilon) // g)

    @classmethod
    def parse(cls, label: str, signal_kind: str = DISPLACEMENT) -> "ResonanceSpec":
        return cls(*presets.parse_label(label), signal_kind=signal_kind)

    @property
    def label(self) -> str:
        return f"{self.kappa}:{self.upsilon}"

    @property
    def is_primary(self) -> bool:
        return self.kappa == self.upsilon == 1

    @property
    def is_subharmonic(self) -> bool:
        return self.upsilon > 1


def resonant_phase_lag(spec: ResonanceSpec) -> float:
    """Phase lag of the kappa-th response harmonic at phase resonance (rad).

    -pi/2 when kappa and upsilon are both odd, -3 pi / (4 upsilon)
    otherwise.  Accelerations lead displacements by pi, so the
    acceleration value is shifted by pi and wrapped to (-pi, pi].
    """
    if spec.kappa % 2 and spec.upsilon % 2:
        lag = -math.pi / 2
    else:
        lag = -3 * math.pi / (4 * spec.upsilon)
    if spec.signal_kind == ACCELERATION:
        lag = K.wrap_angle(lag + math.pi)
    return lag


# -- rig setup --------------------------------------------------------------

@dataclass(frozen=True)
class RigSetup:
    """Everything needed to build a rig except the set-points."""

    plant: OscillatorParams = OscillatorParams()
    gains: PIGains = PIGains(1.0, 5e-3)
    f_s: float = 200.0
    mu: float = 1e-4
    n_harmonics: int = 3
    omega0: float = 1.0
    lock: LockPolicy = LockPolicy()

    @classmethod
    def for_resonance(cls, spec: ResonanceSpec, plant: OscillatorParams = OscillatorParams(),
                      **overrides) -> "RigSetup":
        """Preset values for ``spec``; keyword arguments override them."""
        pre = presets.get(spec.label)
        setup = cls(plant=plant, gains=PIGains(pre["kp"], pre["ki"]), f_s=pre["f_s"],
                    mu=pre["mu"], n_harmonics=int(pre["n_harmonics"]), omega0=pre["omega0"],
                    lock=LockPolicy(warmup_periods=pre["warmup_periods"]))
        return replace(setup, **overrides)

    def build(self, spec: ResonanceSpec, F: float, phase_ref: float,
              initial: MechState = MechState()) -> PLLRig:
        from .harmonics import FilterConfig

        n = max(self.n_harmonics, spec.kappa, spec.upsilon)
        ctrl = ControllerState(omega_o=self.omega0, phase_ref=phase_ref, F=F, gains=self.gains,
                               kappa=spec.kappa, upsilon=spec.upsilon)
        return PLLRig(self.plant, ctrl, FilterConfig(N=n, upsilon=spec.upsilon, mu=self.mu),
                      self.f_s, lock=self.lock, initial=initial)


# -- schedules and records ------------------------------------------------

PHASE = "phase"
FORCE = "force"


@dataclass(frozen=True)
class SweepSchedule:
    """Ordered set-points plus the hold rules applied at each of them.

    ``settle_periods`` response periods are discarded after every change;
    a point is accepted once the lock certificate holds and the mean
    amplitude of the target harmonic over the last ``window_periods``
    excitation periods differs from the window before it by less than
    ``stationarity`` (relative).
    """

    kind: str
    values: tuple
    window: tuple = (-2 * math.pi, 2 * math.pi)
    settle_periods: float = 30.0
    window_periods: float = 50.0
    stationarity: float = 2e-5
    timeout_periods: float = 6000.0
    ramp_periods: float = 10.0
    on_failure: str = "continue"

    def __post_init__(self):
        if self.kind not in (PHASE, FORCE):
            raise ConfigError(f"schedule kind must be {PHASE!r} or {FORCE!r}", key="sweep.kind")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigError("schedule has no set-points", key="sweep.n_points")
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("set-points must be finite", key="sweep.start")
        if self.kind == PHASE:
            lo, hi = self.window
            if not all(lo <= v <= hi for v in vals):
                raise ConfigError("phase set-point outside the declared window", key="sweep.start")
        elif any(v < 0 for v in vals):
            raise ConfigError("force set-points must be >= 0", key="sweep.start")
        if self.on_failure not in ("continue", "abort"):
            raise ConfigError("on_failure must be 'continue' or 'abort'", key="sweep.on_failure")
        object.__setattr__(self, "values", vals)

    @classmethod
    def linspace(cls, kind: str, start: float, stop: float, n: int, **kw) -> "SweepSchedule":
        return cls(kind, tuple(np.linspace(start, stop, int(n))), **kw)


@dataclass
class ExperimentRecord:
    """One identified point; ``A`` holds the harmonic amplitudes A_1..A_N."""

    omega: float
    F: float
    phase_ref: float
    phase_lag: float
    A: np.ndarray
    total_amplitude: float
    locked: bool
    settle_time: float
    t: float
    kappa: int = 1
    upsilon: int = 1

    @property
    def amplitude(self) -> float:
        """Amplitude of the controlled harmonic."""
        return float(self.A[self.kappa - 1])


def total_amplitude(z: np.ndarray, n_samples: int = 512) -> float:
    """Peak |x| of the Fourier reconstruction over one response period."""
    z = np.asarray(z, dtype=float)
    n = (z.size - 1) // 2
    phi = np.linspace(0.0, 2 * math.pi, n_samples, endpoint=False)
    j = np.arange(1, n + 1)
    x = z[0] * K.INV_SQRT2 + np.sin(np.outer(phi, j)) @ z[1::2] + np.cos(np.outer(phi, j)) @ z[2::2]
    return float(np.max(np.abs(x)))


@dataclass
class PointFailure:
    set_point: float
    reason: str
    t: float


@dataclass
class SweepResult:
    spec: ResonanceSpec
    schedule: SweepSchedule
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    rig: PLLRig | None = None
    aborted: bool = False
    note: str = ""

    def __len__(self):
        return len(self.records)

    def omega(self) -> np.ndarray:
        return np.array([r.omega for r in self.records])

    def amplitude(self) -> np.ndarray:
        return np.array([r.amplitude for r in self.records])

    def phase(self) -> np.ndarray:
        return np.array([r.phase_lag for r in self.records])

    def to_csv(self, path) -> None:
        write_records_csv(path, self.records)


def write_records_csv(path, records) -> None:
    """``omega,F,phase_ref,phase_lag,A1..AN,total_amplitude,locked,settle_time``."""
    n = max((r.A.size for r in records), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "F", "phase_ref", "phase_lag"] + [f"A{j}" for j in range(1, n + 1)]
                   + ["total_amplitude", "locked", "settle_time"])
        for r in records:
            w.writerow([repr(float(r.omega)), repr(float(r.F)), repr(float(r.phase_ref)),
                        repr(float(r.phase_lag))] + [repr(float(a)) for a in r.A]
                       + [repr(float(r.total_amplitude)), int(r.locked), repr(float(r.settle_time))])


# -- settling -----------------------------------------------------------------

class _Tracker:
    """Keeps a trailing window of the decimated log for stationarity checks."""

    def __init__(self, kappa: int):
        self.k = kappa - 1
        self.parts: list[RunLog] = []

    def add(self, log: RunLog):
        self.parts.append(log)

    def trim(self, t_min: float):
        while len(self.parts) > 1 and self.parts[0].t[-1] < t_min:
            self.parts.pop(0)

    def window(self, t0: float, t1: float):
        t = np.concatenate([p.t for p in self.parts])
        m = (t > t0) & (t <= t1)
        return m, t

    def stats(self, t0, t1):
        m, _ = self.window(t0, t1)
        if not m.any():
            return None
        cat = lambda name: np.concatenate([getattr(p, name) for p in self.parts])[m]
        A = np.concatenate([p.A for p in self.parts])[m]
        return {"omega": float(np.mean(cat("omega"))), "phase": float(np.mean(cat("phase_lag"))),
                "A": A.mean(axis=0), "n": int(m.sum())}


def _excitation_period(rig: PLLRig) -> float:
    return 2 * math.pi / max(rig.omega, 1e-3)


def settle(rig: PLLRig, sched: SweepSchedule) -> tuple[ExperimentRecord | None, str]:
    """Hold the current set-point until it is certified or the timeout expires.

    Returns the record (or None) and a reason string for failures.
    RunFailure exceptions propagate.
    """
    t_start = rig.t
    P = _excitation_period(rig)
    rig.run(sched.settle_periods * rig.upsilon * P, decimation=10**9)
    tracker = _Tracker(rig.kappa)
    timeout = sched.timeout_periods * P
    while rig.t - t_start < timeout:
        P = _excitation_period(rig)
        dec = max(1, int(rig.f_s * P / 16))
        tracker.add(rig.run(5 * P, decimation=dec))
        tw = sched.window_periods * P
        tracker.trim(rig.t - 2.5 * tw)
        if not rig.locked or rig.lock_time < 2 * tw:
            continue
        now = tracker.stats(rig.t - tw, rig.t)
        before = tracker.stats(rig.t - 2 * tw, rig.t - tw)
        if now is None or before is None:
            continue
        a1, a0 = now["A"][rig.kappa - 1], before["A"][rig.kappa - 1]
        if abs(a1 - a0) <= sched.stationarity * max(a1, 1e-300):
            rec = ExperimentRecord(
                omega=now["omega"], F=rig.force_amp, phase_ref=rig.phase_ref,
                phase_lag=now["phase"], A=now["A"], total_amplitude=total_amplitude(rig.response_weights),
                locked=True, settle_time=rig.t - t_start, t=rig.t, kappa=rig.kappa, upsilon=rig.upsilon)
            return rec, ""
    return None, "lock-timeout"


def _acquire(rig: PLLRig, sched: SweepSchedule) -> PLLRig:
    """Run from rest until the loop reports lock (or the point timeout passes).

    Acquisition is done at the resonant phase lag, where the loop pulls in
    from rest reliably; far from it the early phase estimate can drive the
    frequency below zero.
    """
    timeout = sched.timeout_periods * _excitation_period(rig)
    while not rig.locked and rig.t < timeout:
        rig.run(5 * _excitation_period(rig), decimation=10**9)
    return rig


def _sweep(spec, sched, rig, apply, accept=None) -> SweepResult:
    result = SweepResult(spec=spec, schedule=sched, rig=rig)
    for value in sched.values:
        ramp = sched.ramp_periods * _excitation_period(rig)
        apply(rig, value, ramp)
        try:
            rec, reason = settle(rig, sched)
        except RunFailure as exc:
            result.failures.append(PointFailure(value, f"{type(exc).__name__}: {exc}", exc.t))
            result.aborted = True
            break
        if rec is not None and accept is not None:
            reason = accept(rec)
            if reason:
                rec = None
        if rec is None:
            result.failures.append(PointFailure(value, reason, rig.t))
            if sched.on_failure == "abort" or reason == "isola-extinction":
                result.aborted = reason != "isola-extinction"
                if reason == "isola-extinction":
                    result.note = f"isola no longer sustained at F={value!r}"
                break
            continue
        result.records.append(rec)
    return result


def nfrc_sweep(spec: ResonanceSpec, F: float, schedule: SweepSchedule,
               setup: RigSetup | None = None, rig: PLLRig | None = None) -> SweepResult:
    """Step the reference phase at constant force; one record per certified set-point.

    Starts from rest unless ``rig`` (a prior locked state, required for
    isolas) is given; the rig is warm-started from point to point.
    """
    if schedule.kind != PHASE:
        raise ConfigError("an NFRC sweep needs a phase schedule", key="sweep.kind")
    if rig is None:
        setup = setup or RigSetup.for_resonance(spec)
        rig = _acquire(setup.build(spec, F, resonant_phase_lag(spec)), schedule)
        # walk to the first set-point no faster than 0.1 rad per ramp
        step = abs(schedule.values[0] - rig.phase_ref)
        ramp = schedule.ramp_periods * _excitation_period(rig) * max(1.0, step / 0.1)
        rig.set_phase_ref(schedule.values[0], ramp)
        rig.run(ramp, decimation=10**9)
    else:
        rig = rig.copy()
        rig.set_force(F, schedule.ramp_periods * _excitation_period(rig))
    accept = _subharmonic_check(spec) if spec.is_subharmonic else None
    return _sweep(spec, schedule, rig, lambda r, v, ramp: r.set_phase_ref(v, ramp), accept)


def backbone_sweep(spec: ResonanceSpec, schedule: SweepSchedule, phase_ref: float | None = None,
                   setup: RigSetup | None = None, rig: PLLRig | None = None) -> SweepResult:
    """Step the force at the resonant phase lag; emits backbone (omega, amplitude) pairs.

    For subharmonics the sweep stops quietly once the captured branch is
    lost (the isola no longer exists at that force).
    """
    if schedule.kind != FORCE:
        raise ConfigError("a backbone sweep needs a force schedule", key="sweep.kind")
    phase_ref = resonant_phase_lag(spec) if phase_ref is None else phase_ref
    if rig is None:
        setup = setup or RigSetup.for_resonance(spec)
        rig = setup.build(spec, schedule.values[0], phase_ref)
    else:
        rig = rig.copy()
        rig.set_phase_ref(phase_ref, schedule.ramp_periods * _excitation_period(rig))
    accept = None
    if spec.is_subharmonic:
        check = _subharmonic_check(spec)
        accept = lambda rec: "isola-extinction" if check(rec) else ""
    result = _sweep(spec, schedule, rig, lambda r, v, ramp: r.set_force(v, ramp), accept)
    if spec.is_subharmonic and result.failures and result.failures[-1].reason == "lock-timeout":
        result.failures[-1].reason = "isola-extinction"
        result.note = f"isola no longer sustained at F={result.failures[-1].set_point!r}"
        result.aborted = False
    return result


SUBHARMONIC_RATIO = 1.0


def _subharmonic_check(spec: ResonanceSpec, ratio: float = SUBHARMONIC_RATIO):
    def check(rec: ExperimentRecord) -> str:
        if rec.A[0] < ratio * rec.A[spec.upsilon - 1]:
            return "no-subharmonic-content"
        return ""
    return check


# -- state transfer ------------------------------------------------------------

@dataclass
class TransferResult:
    outcome: str
    log: RunLog
    rig: PLLRig
    record: ExperimentRecord | None
    diagnostics: dict

    @property
    def captured(self) -> bool:
        return self.outcome == CAPTURED


def state_transfer(spec: ResonanceSpec, F: float, omega0: float | None = None,
                   phase_ref: float | None = None, timeout: float = 40000.0,
                   setup: RigSetup | None = None, subharmonic_ratio: float = SUBHARMONIC_RATIO,
                   n_log: int = 20000, sched: SweepSchedule | None = None) -> TransferResult:
    """Run from rest towards ``spec`` and report whether the target branch was captured.

    Capture means a certified lock (phase and amplitude stationarity as in
    :class:`SweepSchedule`) and, for subharmonics, a subharmonic line at
    least ``subharmonic_ratio`` times the forced line.
    """
    setup = setup or RigSetup.for_resonance(spec)
    if omega0 is not None:
        setup = replace(setup, omega0=omega0)
    phase_ref = resonant_phase_lag(spec) if phase_ref is None else phase_ref
    sched = sched or SweepSchedule(PHASE, (phase_ref,))
    rig = setup.build(spec, F, phase_ref)
    dec = max(1, int(timeout * setup.f_s / n_log))
    parts: list[RunLog] = []
    tracker = _Tracker(spec.kappa)
    failure = ""
    record = None
    chunk = 50 * 2 * math.pi / setup.omega0
    while rig.t < timeout:
        try:
            log = rig.run(min(chunk, timeout - rig.t + 1.0 / setup.f_s), decimation=dec)
        except RunFailure as exc:
            parts.append(exc.log)
            failure = f"{type(exc).__name__}: {exc}"
            break
        parts.append(log)
        tracker.add(log)
        P = _excitation_period(rig)
        tw = sched.window_periods * P
        tracker.trim(rig.t - 2.5 * tw)
        if not rig.locked or rig.lock_time < 2 * tw:
            continue
        now = tracker.stats(rig.t - tw, rig.t)
        before = tracker.stats(rig.t - 2 * tw, rig.t - tw)
        if now is None or before is None:
            continue
        a1, a0 = now["A"][spec.kappa - 1], before["A"][spec.kappa - 1]
        if abs(a1 - a0) > sched.stationarity * max(a1, 1e-300):
            continue
        if spec.is_subharmonic and now["A"][0] < subharmonic_ratio * now["A"][spec.upsilon - 1]:
            continue
        record = ExperimentRecord(
            omega=now["omega"], F=F, phase_ref=phase_ref, phase_lag=now["phase"], A=now["A"],
            total_amplitude=total_amplitude(rig.response_weights), locked=True,
            settle_time=rig.t, t=rig.t, kappa=spec.kappa, upsilon=spec.upsilon)
        break
    full = parts[0]
    for p in parts[1:]:
        full = full.concat(p)
    diag = _transfer_diagnostics(full, phase_ref, failure)
    outcome = CAPTURED if record is not None else NOT_CAPTURED
    return TransferResult(outcome, full, rig, record, diag)


def _transfer_diagnostics(log: RunLog, phase_ref: float, failure: str) -> dict:
    diag = {"failure": failure or ("" if len(log) else "empty log"), "duration": float(log.t[-1]) if len(log) else 0.0}
    if len(log) < 4:
        return diag
    tail = slice(int(0.8 * len(log)), None)
    w = log.omega[tail]
    e = log.phase_lag[tail] - phase_ref
    e = e[np.isfinite(e)]
    diag.update({
        "omega_min": float(w.min()), "omega_max": float(w.max()),
        "omega_span": float(w.max() - w.min()),
        "phase_error_max": float(np.max(np.abs(e))) if e.size else math.nan,
        "phase_error_rms": float(np.sqrt(np.mean(e**2))) if e.size else math.nan,
        "locked_fraction": float(np.mean(log.locked[tail])),
        "x_max": float(np.max(np.abs(log.x))),
    })
    return diag


# -- classification and basins ---------------------------------------------------

SUB_HI = 0.10
SUB_LO = 0.01
# below the free-decay drop between tail halves (about 3% at c = 0.001), so a ringing
# transient on the subharmonic line is not mistaken for a subharmonic orbit
STAT_TOL = 0.01


def classify_steady_state(t: np.ndarray, x: np.ndarray, omega: float, upsilon: int,
                          phase0: float = 0.0, hi: float = SUB_HI, lo: float = SUB_LO,
                          stat_tol: float = STAT_TOL) -> str:
    """Label a steady-state tail ``main``, ``isola`` or ``unresolved``.

    The tail is cut to a whole number of response periods
    ``upsilon * 2 pi / omega`` and must cover at least 20 of them.
    ``isola`` means the omega/upsilon line exceeds ``hi`` times the RMS,
    ``main`` that it is below ``lo`` times the RMS.  A tail whose
    subharmonic line differs between its two halves by more than
    ``stat_tol`` (relative) is not stationary and is ``unresolved``.
    Samples must be uniform in time.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if upsilon == 1:
        raise ValueError("classification needs a subharmonic index upsilon > 1")
    T = upsilon * 2 * math.pi / omega
    span = t[-1] - t[0] + (t[1] - t[0])
    n_per = int(span / T + 1e-9)
    if n_per < 20:
        raise ValueError(f"tail covers {n_per} response periods; at least 20 are needed")
    dt = t[1] - t[0]
    n = int(round(n_per * T / dt))
    t, x = t[-n:], x[-n:]
    phases = (omega * t + phase0) / upsilon
    return _LABELS[K.classify_tail(np.ascontiguousarray(x), phases, hi, lo, stat_tol)]


@dataclass(frozen=True)
class GridSpec:
    x_range: tuple = (-2.0, 2.0)
    v_range: tuple = (-2.0, 2.0)
    resolution: int = 201

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.linspace(*self.x_range, self.resolution),
                np.linspace(*self.v_range, self.resolution))


@dataclass
class BasinResult:
    grid: GridSpec
    F: float
    omega: float
    upsilon: int
    horizon_periods: int
    labels: np.ndarray  # (n_v, n_x) of label codes

    def count(self, label: str) -> int:
        code = {v: k for k, v in _LABELS.items()}[label]
        return int(np.sum(self.labels == code))

    @property
    def n_cells(self) -> int:
        return int(self.labels.size)

    @property
    def fraction(self) -> float:
        """Share of all cells attracted to the isola."""
        return self.count(ISOLA) / self.n_cells

    def fractions(self) -> dict:
        return {lab: self.count(lab) / self.n_cells for lab in _LABELS.values()}

    def to_csv(self, path) -> None:
        xs, vs = self.grid.axes()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x0", "v0", "label"])
            for i, v0 in enumerate(vs):
                for j, x0 in enumerate(xs):
                    w.writerow([repr(float(x0)), repr(float(v0)), _LABELS[int(self.labels[i, j])]])

    def summary_csv(self, path) -> None:
        fr = self.fractions()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["F", "omega", "upsilon", "x_min", "x_max", "v_min", "v_max", "resolution",
                        "horizon_periods", "fraction", "main", "isola", "unresolved", "diverged"])
            w.writerow([repr(self.F), repr(self.omega), self.upsilon, repr(self.grid.x_range[0]),
                        repr(self.grid.x_range[1]), repr(self.grid.v_range[0]),
                        repr(self.grid.v_range[1]), self.grid.resolution, self.horizon_periods,
                        repr(self.fraction), self.count(MAIN), self.count(ISOLA),
                        self.count(UNRESOLVED), self.count(DIVERGED)])


def basin_scan(F: float, omega: float, grid: GridSpec = GridSpec(), upsilon: int = 3,
               horizon_periods: int = 600, tail_periods: int | None = None,
               steps_per_period: int = 64, p: OscillatorParams = OscillatorParams(),
               jobs: int = 1) -> BasinResult:
    """Classify the open-loop steady state reached from every grid cell.

    Forcing is ``F sin(omega t)``; each cell is integrated for
    ``horizon_periods`` forcing periods with a whole number of RK4 steps per
    period, and the last ``tail_periods`` (default: 20 response periods) are
    classified.  Rows are distributed over ``jobs`` threads; the result does
    not depend on the split.
    """
    tail = tail_periods if tail_periods is not None else 20 * upsilon
    if tail % upsilon:
        raise ValueError("tail must span whole response periods")
    if tail > horizon_periods:
        raise ValueError("tail longer than the horizon")
    xs, vs = grid.axes()
    X, V = np.meshgrid(xs, vs)
    x0 = np.ascontiguousarray(X.ravel())
    v0 = np.ascontiguousarray(V.ravel())
    labels = np.zeros(x0.size, dtype=np.int64)
    plant = p.as_array()

    def work(sl):
        out = np.zeros(sl.stop - sl.start, dtype=np.int64)
        K.basin_cells(x0[sl].copy(), v0[sl].copy(), plant, float(F), float(omega), int(upsilon),
                      int(steps_per_period), int(horizon_periods), int(tail), SUB_HI, SUB_LO,
                      STAT_TOL, X_MAX, out)
        return sl, out

    n_chunks = max(1, jobs) * 8
    bounds = np.linspace(0, x0.size, n_chunks + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            done = list(ex.map(work, slices))
    else:
        done = [work(s) for s in slices]
    for sl, out in done:
        labels[sl] = out
    return BasinResult(grid, float(F), float(omega), int(upsilon), int(horizon_periods),
                       labels.reshape(V.shape))


__all__ = [
    "ResonanceSpec", "resonant_phase_lag", "RigSetup", "SweepSchedule", "ExperimentRecord",
    "SweepResult", "PointFailure", "nfrc_sweep", "backbone_sweep", "state_transfer",
    "TransferResult", "classify_steady_state", "GridSpec", "BasinResult", "basin_scan",
    "total_amplitude", "write_records_csv",
]
