"""Agreement checks between two response curves stored as CSV files.

Two metrics are offered.  ``phase`` matches points at equal phase lag,
which is well posed on folded response curves where amplitude is not a
function of frequency.  ``locus`` treats the reference as a curve in the
(omega, amplitude) plane, as for backbones and peak loci.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ComparisonImpossible


@dataclass
class Curve:
    omega: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray | None = None
    stable: np.ndarray | None = None


def read_curve(path, amp_column: str = "A1", phase_column: str | None = None) -> Curve:
    """Load one curve; the phase column defaults to ``phase_lag`` or ``Phi<k>``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ComparisonImpossible(f"{path} holds no data rows")
    cols = rows[0].keys()
    if amp_column not in cols or "omega" not in cols:
        raise ComparisonImpossible(f"{path} lacks columns omega/{amp_column}")
    if phase_column is None:
        k = amp_column[1:] if amp_column.startswith("A") else "1"
        phase_column = "phase_lag" if "phase_lag" in cols else f"Phi{k}"
    omega = np.array([float(r["omega"]) for r in rows])
    amp = np.array([float(r[amp_column]) for r in rows])
    phase = np.array([float(r[phase_column]) for r in rows]) if phase_column in cols else None
    stable = np.array([r["stable"] == "1" for r in rows]) if "stable" in cols else None
    return Curve(omega, amp, phase, stable)


@dataclass
class ComparisonReport:
    metric: str
    n_points: int
    amp_max: float
    amp_rms: float
    phase_max_deg: float
    phase_rms_deg: float
    freq_max: float
    amp_tol: float
    phase_tol_deg: float
    rows: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        ok = self.amp_max <= self.amp_tol
        if math.isfinite(self.phase_max_deg):
            ok = ok and self.phase_max_deg <= self.phase_tol_deg
        return ok

    def summary(self) -> dict:
        return {"metric": self.metric, "n_points": self.n_points, "amp_max": self.amp_max,
                "amp_rms": self.amp_rms, "phase_max_deg": self.phase_max_deg,
                "phase_rms_deg": self.phase_rms_deg, "freq_max": self.freq_max,
                "amp_tol": self.amp_tol, "phase_tol_deg": self.phase_tol_deg,
                "passed": self.passed}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["omega", "amplitude", "ref_amplitude", "amp_dev", "phase_dev_deg"])
            for r in self.rows:
                w.writerow([repr(float(v)) for v in r])


def _phase_match(a: Curve, refs: list[Curve]):
    """Reference amplitude and frequency at the phase of every point of ``a``."""
    out = []
    for w, A, ph in zip(a.omega, a.amplitude, a.phase):
        best = None
        for ref in refs:
            rp = np.unwrap(ref.phase)
            # bring the point's phase onto the reference branch of the unwrapped curve
            shift = 2 * math.pi * np.round((rp.mean() - ph) / (2 * math.pi))
            p = ph + shift
            for i in range(rp.size - 1):
                lo, hi = sorted((rp[i], rp[i + 1]))
                if lo <= p <= hi and hi > lo:
                    s = (p - rp[i]) / (rp[i + 1] - rp[i])
                    wr = ref.omega[i] + s * (ref.omega[i + 1] - ref.omega[i])
                    ar = ref.amplitude[i] + s * (ref.amplitude[i + 1] - ref.amplitude[i])
                    if best is None or abs(wr - w) < abs(best[0] - w):
                        best = (wr, ar)
        out.append(best)
    return out


def _nearest_on(ref: Curve, w: float, A: float, w_scale: float, a_scale: float):
    """Closest point of the reference polyline in scaled (omega, A); returns (t-param data)."""
    P = np.column_stack([ref.omega / w_scale, ref.amplitude / a_scale])
    q = np.array([w / w_scale, A / a_scale])
    d = P[1:] - P[:-1]
    L = np.einsum("ij,ij->i", d, d)
    s = np.clip(np.einsum("ij,ij->i", q - P[:-1], d) / np.where(L > 0, L, 1.0), 0.0, 1.0)
    proj = P[:-1] + s[:, None] * d
    dist = np.linalg.norm(proj - q, axis=1)
    i = int(np.argmin(dist))
    return i, float(s[i]), float(dist[i])


def compare_curves(a: Curve, refs: list[Curve], metric: str = "phase", amp_tol: float = 0.01,
                   phase_tol_deg: float = 1.0) -> ComparisonReport:
    """Deviation of curve ``a`` from the reference curves ``refs``.

    ``phase``: relative amplitude deviation at equal phase lag, and phase
    deviation at the nearest reference point in the (omega, A) plane scaled
    by the overlapping ranges.  ``locus``: relative amplitude deviation at
    the nearest point of the reference locus, no phase.
    """
    if metric not in ("phase", "locus"):
        raise ValueError("metric must be 'phase' or 'locus'")
    w_all = np.concatenate([r.omega for r in refs])
    a_all = np.concatenate([r.amplitude for r in refs])
    lo, hi = max(a.omega.min(), w_all.min()), min(a.omega.max(), w_all.max())
    if lo > hi:
        raise ComparisonImpossible("frequency ranges do not overlap")
    w_scale = max(np.ptp(np.concatenate([a.omega, w_all])), 1e-12)
    a_scale = max(np.max(np.abs(np.concatenate([a.amplitude, a_all]))), 1e-300)

    rows = []
    if metric == "phase":
        if a.phase is None or any(r.phase is None for r in refs):
            raise ComparisonImpossible("phase metric needs phase columns in both runs")
        matches = _phase_match(a, refs)
        for w, A, ph, m in zip(a.omega, a.amplitude, a.phase, matches):
            if m is None:
                continue
            wr, ar = m
            best = None
            for ref in refs:
                i, s, d = _nearest_on(ref, w, A, w_scale, a_scale)
                if best is None or d < best[0]:
                    rp = np.unwrap(ref.phase)
                    best = (d, rp[i] + s * (rp[i + 1] - rp[i]))
            dph = math.remainder(ph - best[1], 2 * math.pi)
            rows.append((w, A, ar, abs(A - ar) / max(abs(ar), 1e-300), math.degrees(abs(dph)), abs(w - wr)))
    else:
        for w, A in zip(a.omega, a.amplitude):
            if not lo <= w <= hi:
                continue
            best = None
            for ref in refs:
                i, s, d = _nearest_on(ref, w, A, w_scale, a_scale)
                if best is None or d < best[0]:
                    ar = ref.amplitude[i] + s * (ref.amplitude[i + 1] - ref.amplitude[i])
                    wr = ref.omega[i] + s * (ref.omega[i + 1] - ref.omega[i])
                    best = (d, ar, wr)
            _, ar, wr = best
            rows.append((w, A, ar, abs(A - ar) / max(abs(ar), 1e-300), math.nan, abs(w - wr)))
    if not rows:
        raise ComparisonImpossible("no point of the first run falls inside the reference range")
    arr = np.array(rows, dtype=float)
    ph = arr[:, 4]
    return ComparisonReport(
        metric=metric, n_points=len(rows), amp_max=float(arr[:, 3].max()),
        amp_rms=float(np.sqrt(np.mean(arr[:, 3] ** 2))),
        phase_max_deg=float(np.nanmax(ph)) if np.isfinite(ph).any() else math.nan,
        phase_rms_deg=float(np.sqrt(np.nanmean(ph**2))) if np.isfinite(ph).any() else math.nan,
        freq_max=float(arr[:, 5].max()), amp_tol=amp_tol, phase_tol_deg=phase_tol_deg,
        rows=[tuple(r[:5]) for r in rows])


def compare(run_a, run_b, amp_column: str = "A1", phase_column: str | None = None,
            metric: str = "phase", amp_tol: float = 0.01, phase_tol_deg: float = 1.0) -> ComparisonReport:
    """Compare CSV file(s) ``run_a`` against reference file(s) ``run_b``."""
    as_list = lambda x: [x] if isinstance(x, (str, Path)) else list(x)
    a_curves = [read_curve(p, amp_column, phase_column) for p in as_list(run_a)]
    refs = [read_curve(p, amp_column, phase_column) for p in as_list(run_b)]
    a = Curve(np.concatenate([c.omega for c in a_curves]),
              np.concatenate([c.amplitude for c in a_curves]),
              None if any(c.phase is None for c in a_curves)
              else np.concatenate([c.phase for c in a_curves]))
    return compare_curves(a, refs, metric=metric, amp_tol=amp_tol, phase_tol_deg=phase_tol_deg)
