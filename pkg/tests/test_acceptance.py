"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Every test gathers all of its sub-checks before deciding, so a FAIL line
lists every number that was out of tolerance.
"""
import math
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from pllt import hbm
from pllt.compare import Curve, compare_curves
from pllt.config import resolve
from pllt.controller import (Actuator, AmplitudeLoopState, ControllerState, PIGains, PLLRig)
from pllt.experiment import (GridSpec, ResonanceSpec, backbone_sweep, basin_scan, nfrc_sweep,
                             resonant_phase_lag, state_transfer)
from pllt.harmonics import FilterConfig, fit_fourier, wrap_angle
from pllt.oscillator import MechState, OscillatorParams, SimConfig, SineForce, simulate

from conftest import ACCEPTANCE, stream, tone_filter

pytestmark = pytest.mark.slow

P = OscillatorParams()
N_HB = 14
# near the 3:1 peak at F=0.5 the 13th harmonic is ~1e-3 of the response with 14 harmonics,
# enough to shift the fold away from the stability change; 24 brings the tail below 1e-4
N_STRONG = 24


class Verdict:
    def __init__(self, n: int):
        self.n = n
        self.items: list = []

    def check(self, name: str, ok, detail: str = "") -> bool:
        self.items.append((name, bool(ok), detail))
        return bool(ok)

    @property
    def ok(self) -> bool:
        return bool(self.items) and all(ok for _, ok, _ in self.items)


@contextmanager
def criterion(n: int):
    v = Verdict(n)
    err = None
    try:
        yield v
    except Exception as exc:  # a crash is a failed criterion, reported like the others
        err = exc
        v.check("error", False, f"{type(exc).__name__}: {exc}")
    parts = [f"{name}{'' if ok else ' [out]'} {detail}".strip() for name, ok, detail in v.items]
    line = f"criterion {n}: {'PASS' if v.ok else 'FAIL'} | " + "; ".join(parts)
    ACCEPTANCE[n] = line
    print(line)
    if err is not None:
        raise err
    assert v.ok, line


# -- oracle helpers ---------------------------------------------------------------

def hb_curve(F: float, w_lo: float, w_hi: float, z_scale: float, N: int = N_HB,
             h_max: float = 0.02) -> hbm.Branch:
    return hbm.continue_branch(hbm.primary_seed(P, w_lo, F, N=N), P, lam_min=w_lo, lam_max=w_hi,
                               z_scale=z_scale, h_max=h_max, max_points=20000)


def hb_peak(branch: hbm.Branch) -> tuple[float, float]:
    """Amplitude maximum along the branch, refined by a parabola in arclength."""
    A = branch.amplitude(1)
    w = branch.omega
    i = int(np.clip(np.argmax(A), 1, len(A) - 2))
    seg = np.hypot(np.diff(w) / np.ptp(w), np.diff(A) / A.max())
    s = np.concatenate([[0.0], np.cumsum(seg)])[i - 1:i + 2]
    ca = np.polyfit(s, A[i - 1:i + 2], 2)
    cw = np.polyfit(s, w[i - 1:i + 2], 2)
    s_star = -ca[1] / (2 * ca[0])
    return float(np.polyval(cw, s_star)), float(np.polyval(ca, s_star))


def phase_crossings(branch: hbm.Branch, kappa: int, target: float) -> list:
    """(omega, A_kappa, stable) at every point where the kappa-th phase equals ``target``."""
    d = np.array([wrap_angle(pt.phase(kappa) - target) for pt in branch.points])
    w, A = branch.omega, branch.amplitude(kappa)
    out = []
    for i in range(len(d) - 1):
        if d[i] == 0.0 or (d[i] * d[i + 1] < 0 and abs(d[i] - d[i + 1]) < 1.0):
            s = d[i] / (d[i] - d[i + 1]) if d[i] != d[i + 1] else 0.0
            out.append((w[i] + s * (w[i + 1] - w[i]), A[i] + s * (A[i + 1] - A[i]),
                        bool(branch.points[i].stable and branch.points[i + 1].stable)))
    return out


def rig_seed(rig: PLLRig, F: float, upsilon: int, periods: int = 10, N: int = N_HB) -> hbm.BranchPoint:
    """Newton-corrected harmonic-balance solution fitted to the rig's current steady state."""
    log = rig.run(periods * upsilon * 2 * math.pi / rig.omega)
    z = fit_fourier(log.x, log.theta / upsilon, N)
    return hbm.newton_correct(z, rig.omega, F, P, N=N, upsilon=upsilon)


def local_branch(seed: hbm.BranchPoint, half_width: float) -> list:
    kw = dict(lam_min=seed.omega - half_width, lam_max=seed.omega + half_width, z_scale=1.0,
              lam_scale=0.01, max_points=3000)
    return [hbm.continue_branch(seed, P, direction=d, **kw) for d in (1, -1)]


def isola(seed: hbm.BranchPoint) -> hbm.Branch:
    kw = dict(lam_min=0.5, lam_max=80.0, z_scale=1.0, lam_scale=1.0, detect_closure=True,
              max_points=6000)
    b = hbm.continue_branch(seed, P, direction=1, **kw)
    if not b.closed:
        back = hbm.continue_branch(seed, P, direction=-1, **kw)
        back.points = back.points[::-1] + b.points[1:]
        back.closed = False
        return back
    return b


def survives(pt: hbm.BranchPoint, periods: int = 100, n: int = 400) -> float:
    """Relative change of the peak |x| over the last of ``periods`` integrated response periods."""
    z, w, u = pt.z, pt.omega, pt.upsilon
    j = np.arange(1, pt.N + 1)
    x0 = z[0] / math.sqrt(2) + np.sum(z[2::2])
    v0 = w / u * np.sum(j * z[1::2])
    T = u * 2 * math.pi / w
    tr = simulate(MechState(float(x0), float(v0)), SineForce(pt.F, w),
                  SimConfig(f_s=n / T, duration=periods * T), P, decimation=1)
    ref = pt.peak_amplitude(n)
    return abs(np.max(np.abs(tr.x[-n:])) - ref) / ref


# -- shared runs ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def captures():
    """State transfers onto the two subharmonic isolas (criteria 4 and 8)."""
    out = {}
    for label, F, w0, lag in (("1:3", 0.5, 3.0, -math.pi / 2), ("1:2", 0.5, 2.0, -3 * math.pi / 8)):
        spec = ResonanceSpec.parse(label)
        t0 = time.perf_counter()
        res = state_transfer(spec, F, omega0=w0, phase_ref=lag)
        entry = {"result": res, "wall": time.perf_counter() - t0, "isola": None, "error": ""}
        if res.captured:
            try:
                entry["isola"] = isola(rig_seed(res.rig.copy(), F, spec.upsilon))
            except Exception as exc:
                entry["error"] = f"{type(exc).__name__}: {exc}"
        out[label] = entry
    return out


@pytest.fixture(scope="module")
def weak_branch():
    return hb_curve(1e-4, 0.9, 1.1, 0.1)


# -- criteria -------------------------------------------------------------------------

def test_criterion_1_primary_nfrc(weak_branch):
    with criterion(1) as v:
        cfg = resolve({}, preset="1:1", kind="nfrc")
        t0 = time.perf_counter()
        res = nfrc_sweep(cfg.resonance(), cfg["controller.force_amp"], cfg.schedule(),
                         setup=cfg.rig_setup())
        wall = time.perf_counter() - t0
        locked = [r for r in res.records if r.locked]
        v.check("locked points", len(locked) >= 40, f"{len(locked)} of {len(cfg.schedule().values)}")
        a = Curve(np.array([r.omega for r in locked]), np.array([r.A[0] for r in locked]),
                  np.array([r.phase_lag for r in locked]))
        ref = Curve(weak_branch.omega, weak_branch.amplitude(1), weak_branch.phase(1),
                    weak_branch.stable())
        rep = compare_curves(a, [ref], metric="phase")
        v.check("amplitude", rep.amp_max < 0.01, f"max {100 * rep.amp_max:.3f}% (rms {100 * rep.amp_rms:.3f}%)")
        v.check("phase", rep.phase_max_deg < 1.0, f"max {rep.phase_max_deg:.3f} deg")
        # stability of the harmonic-balance solution at each record's phase (phase is monotone along the branch)
        ph = weak_branch.phase(1)
        idx = np.interp(-a.phase, -ph, np.arange(len(ph)))
        unstable = int(np.sum(~weak_branch.stable()[np.round(idx).astype(int)]))
        v.check("HBM-unstable points held", unstable > 0, f"{unstable}")
        v.check("runtime", wall < 300, f"{wall:.0f} s")


def test_criterion_2_backbone():
    with criterion(2) as v:
        cfg = resolve({}, preset="1:1", kind="backbone")
        res = backbone_sweep(cfg.resonance(), cfg.schedule(), setup=cfg.rig_setup())
        n_set = len(cfg.schedule().values)
        v.check("records", len(res) == n_set, f"{len(res)} of {n_set}")
        dA, dw, dbb, X = [], [], [], []
        for r in res.records:
            w_hb, A_hb = hb_peak(hb_curve(r.F, 0.95, 1.06, 0.3))
            dA.append(abs(r.A[0] - A_hb) / A_hb)
            dw.append(abs(r.omega - w_hb) / w_hb)
            amp = r.A[0]
            X.append(amp)
            w_bb = math.sqrt(P.k / P.m) * (1 + 3 * P.k_nl * amp**2 / (8 * P.k))
            dbb.append(abs(r.omega - w_bb) / w_bb)
        v.check("peak amplitude", max(dA) < 0.01, f"max {100 * max(dA):.3f}%")
        v.check("peak frequency", max(dw) < 0.005, f"max {100 * max(dw):.4f}%")
        v.check("X <= 0.3", max(X) <= 0.3, f"X max {max(X):.3f}")
        v.check("analytic backbone", max(dbb) < 0.02, f"max {100 * max(dbb):.4f}%")


def test_criterion_3_superharmonics():
    with criterion(3) as v:
        for label in ("3:1", "2:1"):
            spec = ResonanceSpec.parse(label)
            target = resonant_phase_lag(spec)
            for F in (0.3, 0.5):
                tag = f"{label} F={F}"
                res = state_transfer(spec, F)
                if not v.check(f"{tag} lock", res.captured, res.outcome):
                    continue
                rec = res.record
                v.check(f"{tag} phase", abs(rec.phase_lag - target) < math.radians(0.5),
                        f"{rec.phase_lag:+.4f} rad at omega {rec.omega:.5f}")
                if spec.kappa == 3:
                    # the 3:1 peak lies on the main branch, often right at its fold, where a
                    # fixed-frequency corrector seeded from the rig has no nearby solution
                    hits = phase_crossings(hb_curve(F, 0.3, 0.6, F ** (1 / 3), N=N_STRONG), 3, target)
                else:
                    # the 2:1 solution bifurcates off the symmetric main branch: seed from the rig
                    seed = rig_seed(res.rig.copy(), F, 1, N=N_STRONG)
                    hits = [c for b in local_branch(seed, 0.02) for c in phase_crossings(b, 2, target)]
                if not v.check(f"{tag} HBM crossing", hits, f"{len(hits)} found"):
                    continue
                w_hb, A_hb, _ = min(hits, key=lambda c: abs(c[0] - rec.omega))
                dev = abs(rec.A[spec.kappa - 1] - A_hb) / A_hb
                v.check(f"{tag} amplitude", dev < 0.02,
                        f"A{spec.kappa} {rec.A[spec.kappa - 1]:.4f} vs {A_hb:.4f} ({100 * dev:.2f}%)")


def test_criterion_4_subharmonic_capture(captures):
    with criterion(4) as v:
        for label, lag in (("1:3", -math.pi / 2), ("1:2", -3 * math.pi / 8)):
            c = captures[label]
            res = c["result"]
            if not v.check(f"{label} capture", res.captured, f"{res.outcome} in {c['wall']:.0f} s"):
                continue
            rec = res.record
            br = c["isola"]
            if not v.check(f"{label} isola", br is not None, c["error"]):
                continue
            hits = phase_crossings(br, 1, lag)
            if not v.check(f"{label} resonance points on isola", hits, f"{len(hits)}"):
                continue
            w_up, A_up, _ = max(hits, key=lambda h: h[1])
            v.check(f"{label} upper point", abs(rec.omega - w_up) / w_up < 0.005
                    and abs(rec.A[0] - A_up) / A_up < 0.02,
                    f"PLL ({rec.omega:.4f}, {rec.A[0]:.4f}) vs HBM ({w_up:.4f}, {A_up:.4f})")
        weak = state_transfer(ResonanceSpec.parse("1:3"), 0.1, omega0=3.0, phase_ref=-math.pi / 2)
        d = weak.diagnostics
        v.check("1:3 F=0.1 not captured", not weak.captured and not d["failure"], weak.outcome)
        v.check("F=0.1 bounded", d.get("phase_error_max", math.inf) < math.pi
                and math.isfinite(d.get("x_max", math.inf)),
                f"phase error max {d.get('phase_error_max', math.nan):.3f} rad")
        v.check("F=0.1 not converging", d.get("omega_span", 0.0) > 1e-3,
                f"omega span {d.get('omega_span', math.nan):.4f}")


def test_criterion_5_basin_fractions():
    with criterion(5) as v:
        t0 = time.perf_counter()
        fr = {}
        for F in (0.1, 0.5, 0.7):
            fr[F] = basin_scan(F, 3.0, GridSpec(), jobs=os.cpu_count() or 1).fraction
        wall = time.perf_counter() - t0
        v.check("F=0.5", 0.60 <= fr[0.5] <= 0.70, f"{fr[0.5]:.4f}")
        v.check("F=0.7", 0.79 <= fr[0.7] <= 0.89, f"{fr[0.7]:.4f}")
        v.check("F=0.1", fr[0.1] < 0.02, f"{fr[0.1]:.4f}")
        v.check("strictly increasing", fr[0.1] < fr[0.5] < fr[0.7], "")
        v.check("runtime", wall < 1200, f"{wall:.0f} s")


def test_criterion_6_phase_table():
    expected = {(1, 1): -math.pi / 2, (3, 1): -math.pi / 2, (2, 1): -3 * math.pi / 4,
                (1, 3): -math.pi / 2, (1, 2): -3 * math.pi / 8}
    with criterion(6) as v:
        for (k, u), lag in expected.items():
            got = resonant_phase_lag(ResonanceSpec(k, u))
            v.check(f"{k}:{u}", got == lag, f"{got!r}")


def test_criterion_7_adaptive_filter():
    with criterion(7) as v:
        fs, w = 200.0, 1.0
        t = np.arange(1, int(200 * 2 * math.pi / w * fs) + 1) / fs
        filt = stream(tone_filter(), 0.7 * np.sin(w * t + 0.3), w * t)
        da, dp = abs(filt.amplitude(1) - 0.7), abs(filt.phase(1) - 0.3)
        v.check("tone", da < 1e-5 and dp < 1e-5, f"amplitude error {da:.1e}, phase error {dp:.1e}")
        n = int(400 * 2 * math.pi / w * fs)
        t = np.arange(1, n + 1) / fs
        rate = 0.01 * w / (100 * 2 * math.pi / w)
        theta = w * t + 0.5 * rate * t**2
        x = 0.5 * np.sin(theta + 0.4)
        filt = tone_filter()
        worst = 0.0
        for i, (s, th) in enumerate(zip(x, theta)):
            filt.update(float(s), float(th))
            if i > n // 4:
                worst = max(worst, abs(math.remainder(filt.phase(1) - 0.4, 2 * math.pi)))
        v.check("chirp", worst < 0.01, f"max phase error {worst:.2e} rad")


def test_criterion_8_hbm_consistency(weak_branch, captures):
    with criterion(8) as v:
        folds = weak_branch.tags("fold")
        v.check("F=1e-4 folds", len(folds) == 2,
                f"{len(folds)} at omega {[round(weak_branch.points[i].omega, 5) for i in folds]}")
        # fine steps so the two closely spaced 2:1 branch points are not stepped over together
        main = hb_curve(0.5, 0.2, 3.0, 0.5 ** (1 / 3), N=N_STRONG, h_max=0.005)
        bps = [main.points[i].omega for i in main.tags("branch_point")]
        v.check("F=0.5 branch point near omega 2", any(abs(w - 2.0) < 0.1 for w in bps),
                f"branch points at {[round(w, 4) for w in bps]}")
        branches = {"F=1e-4": weak_branch, "F=0.5": main}
        for label in ("1:3", "1:2"):
            br = captures[label]["isola"]
            if v.check(f"{label} isola closes", br is not None and br.closed,
                       "" if br is None else f"{br.stop_reason}, omega {br.omega.min():.3f}..{br.omega.max():.3f}"):
                branches[label] = br
        worst, n_checked = 0.0, 0
        for br in branches.values():
            for pt in br.points:
                # tagged bifurcation points carry a multiplier on the unit circle: not hyperbolic
                if pt.stable and pt.bif_tag == "none":
                    worst = max(worst, survives(pt))
                    n_checked += 1
        v.check("stable points survive 100 periods", worst < 1e-3,
                f"{n_checked} points, max drift {100 * worst:.4f}%")


@pytest.mark.parametrize("gain", [1.0, 0.8])
def test_criterion_9_amplitude_controller(gain):
    # both gains report under the same criterion; the second run overwrites with the combined verdict
    F_o = 1e-4
    loop = AmplitudeLoopState(F_o=F_o, A_cmd=F_o, gains=PIGains(0.01, 0.01))
    rig = PLLRig(P, ControllerState(omega_o=1.0, phase_ref=-math.pi / 2, F=F_o, gains=PIGains(1.0, 5e-3)),
                 FilterConfig(3, 1, 1e-4), 200.0, amplitude_loop=loop, actuator=Actuator(gain=gain))
    log = rig.run(4000.0, decimation=200)
    tail = log.force_amp[-len(log) // 10:]
    dev = float(np.max(np.abs(tail - F_o)) / F_o)
    _GAINS[gain] = (dev, rig.commanded_amp / F_o)
    with criterion(9) as v:
        for g, (d, cmd) in sorted(_GAINS.items(), reverse=True):
            v.check(f"g={g}", d < 0.005, f"max deviation {100 * d:.4f}%, command {cmd:.4f} F_o")


_GAINS: dict = {}
