"""Harmonic-balance reference solutions with continuation and stability.

Unknowns follow the adaptive-filter layout ``z = [c0, s1, c1, ..., sN, cN]``
on the basis ``[1/sqrt(2), sin(j w t / u), cos(j w t / u)]`` so that HBM
coefficients and filter weights are directly comparable.  The forcing
``F sin(w t)`` sits on the sine line of harmonic ``j = u``.

The cubic restoring force is evaluated by alternating frequency/time:
synthesise ``x`` on a uniform time grid, cube pointwise, project back.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit

from .errors import CorrectorFailure, IntegrationDivergence
from .harmonics import fit_fourier
from .oscillator import OscillatorParams

RESIDUAL_TOL = 1e-10
STABILITY_TOL = 1e-6
MAX_NEWTON = 25

FREQUENCY = "frequency-sweep"
FORCE = "force-sweep"


def n_time_samples(N: int) -> int:
    """2 (4N + 1) rounded up to a power of two: enough to avoid aliasing the cube."""
    return 1 << (2 * (4 * N + 1) - 1).bit_length()


class HBSystem:
    """Residual and Jacobians of the balanced equations for fixed (params, N, upsilon)."""

    def __init__(self, p: OscillatorParams, N: int = 14, upsilon: int = 1, n_time: int | None = None):
        self.p = p
        self.N = int(N)
        self.upsilon = int(upsilon)
        self.n = 2 * self.N + 1
        self.M = n_time or n_time_samples(self.N)
        tau = 2 * np.pi * np.arange(self.M) / self.M
        j = np.arange(1, self.N + 1)
        gamma = np.empty((self.M, self.n))
        gamma[:, 0] = 1 / np.sqrt(2)
        gamma[:, 1::2] = np.sin(np.outer(tau, j))
        gamma[:, 2::2] = np.cos(np.outer(tau, j))
        self.gamma = gamma
        self.proj = (2.0 / self.M) * gamma.T
        self.force_index = 2 * self.upsilon - 1
        if self.upsilon > self.N:
            raise ValueError("N must be at least upsilon so that the forcing line is represented")

    def linear(self, omega: float) -> tuple[np.ndarray, np.ndarray]:
        """Linear operator L(omega) and its derivative dL/domega."""
        p, u = self.p, self.upsilon
        L = np.zeros((self.n, self.n))
        dL = np.zeros((self.n, self.n))
        L[0, 0] = p.k
        for j in range(1, self.N + 1):
            w = j * omega / u
            a = p.k - p.m * w * w
            b = p.c * w
            s, c = 2 * j - 1, 2 * j
            L[s, s] = a
            L[s, c] = -b
            L[c, c] = a
            L[c, s] = b
            da = -2 * p.m * j * j * omega / (u * u)
            db = p.c * j / u
            dL[s, s] = da
            dL[s, c] = -db
            dL[c, c] = da
            dL[c, s] = db
        return L, dL

    def time_signal(self, z: np.ndarray) -> np.ndarray:
        return self.gamma @ z

    def nonlinear(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """AFT evaluation of the cubic term: coefficients and their Jacobian."""
        x = self.gamma @ z
        knl = self.p.k_nl
        g = self.proj @ (knl * x**3)
        dg = self.proj @ ((3 * knl * x**2)[:, None] * self.gamma)
        return g, dg

    def forcing(self, F: float) -> np.ndarray:
        f = np.zeros(self.n)
        f[self.force_index] = F
        return f

    def residual(self, z, omega, F) -> np.ndarray:
        L, _ = self.linear(omega)
        g, _ = self.nonlinear(z)
        return L @ z + g - self.forcing(F)

    def jacobians(self, z, omega, F):
        """Residual plus derivatives with respect to z, omega and F."""
        L, dL = self.linear(omega)
        g, dg = self.nonlinear(z)
        r = L @ z + g - self.forcing(F)
        dF = np.zeros(self.n)
        dF[self.force_index] = -1.0
        return r, L + dg, dL @ z, dF

    def scaled_norm(self, r, z, F) -> float:
        scale = max(abs(F), self.p.k * float(np.max(np.abs(z))) if z.size else 0.0)
        rn = float(np.max(np.abs(r)))
        return rn / scale if scale > 0 else rn


def hbm_residual(z, omega, F, p: OscillatorParams, N: int, upsilon: int = 1) -> np.ndarray:
    return HBSystem(p, N, upsilon).residual(np.asarray(z, dtype=float), omega, F)


@dataclass
class BranchPoint:
    z: np.ndarray
    omega: float
    F: float
    upsilon: int = 1
    stable: Optional[bool] = None
    multipliers: Optional[np.ndarray] = None
    bif_tag: str = "none"
    residual: float = 0.0
    iterations: int = 0

    @property
    def N(self) -> int:
        return (len(self.z) - 1) // 2

    def amplitude(self, kappa: int) -> float:
        return math.hypot(self.z[2 * kappa - 1], self.z[2 * kappa])

    def amplitudes(self) -> np.ndarray:
        return np.hypot(self.z[1::2], self.z[2::2])

    def phase(self, kappa: int) -> float:
        """Lag of harmonic ``kappa`` with respect to the forcing (which has zero phase)."""
        return math.atan2(self.z[2 * kappa], self.z[2 * kappa - 1])

    def time_signal(self, n: int = 512) -> tuple[np.ndarray, np.ndarray]:
        """One response period of x(t), sampled at ``n`` points."""
        T = self.upsilon * 2 * np.pi / self.omega
        t = np.arange(n) * T / n
        return t, synthesize(self.z, t * self.omega / self.upsilon)

    def peak_amplitude(self, n: int = 1024) -> float:
        _, x = self.time_signal(n)
        return float(np.max(np.abs(x)))


def synthesize(z: np.ndarray, phi: np.ndarray) -> np.ndarray:
    N = (len(z) - 1) // 2
    j = np.arange(1, N + 1)
    phi = np.asarray(phi, dtype=float)
    return z[0] / np.sqrt(2) + np.sin(np.multiply.outer(phi, j)) @ z[1::2] \
        + np.cos(np.multiply.outer(phi, j)) @ z[2::2]


def newton_correct(z0, omega: float, F: float, p: OscillatorParams, N: int | None = None,
                   upsilon: int = 1, tol: float = RESIDUAL_TOL, max_iter: int = MAX_NEWTON,
                   system: HBSystem | None = None) -> BranchPoint:
    """Newton iteration at fixed (omega, F).

    Raises :class:`CorrectorFailure` after ``max_iter`` iterations or when the
    iterate stops being finite.
    """
    z = np.array(z0, dtype=float)
    if N is None:
        N = (len(z) - 1) // 2
    sys_ = system or HBSystem(p, N, upsilon)
    if len(z) != sys_.n:
        z = np.resize(np.concatenate([z, np.zeros(max(0, sys_.n - len(z)))]), sys_.n)
    r, Jz, _, _ = sys_.jacobians(z, omega, F)
    res = sys_.scaled_norm(r, z, F)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise CorrectorFailure(f"Newton did not converge in {max_iter} iterations", res)
        try:
            dz = np.linalg.solve(Jz, -r)
        except np.linalg.LinAlgError:
            raise CorrectorFailure("singular Jacobian", res) from None
        z = z + dz
        it += 1
        if not np.all(np.isfinite(z)):
            raise CorrectorFailure("iterate is not finite", res)
        r, Jz, _, _ = sys_.jacobians(z, omega, F)
        res = sys_.scaled_norm(r, z, F)
    return BranchPoint(z=z, omega=omega, F=F, upsilon=sys_.upsilon, residual=res, iterations=it)


# -- stability ---------------------------------------------------------------

@njit(cache=True)
def _monodromy(z, omega, upsilon, n_steps, m, c, k, knl):
    N = (z.size - 1) // 2
    T = upsilon * 2.0 * math.pi / omega
    h = T / n_steps
    phi = np.eye(2)

    def stiff(t):
        ph = omega * t / upsilon
        x = z[0] / math.sqrt(2.0)
        for j in range(1, N + 1):
            x += z[2 * j - 1] * math.sin(j * ph) + z[2 * j] * math.cos(j * ph)
        return (k + 3.0 * knl * x * x) / m

    for col in range(2):
        d = phi[0, col]
        dv = phi[1, col]
        for i in range(n_steps):
            t = i * h
            s0 = stiff(t)
            sm = stiff(t + 0.5 * h)
            s1 = stiff(t + h)
            k1d = dv
            k1v = -c / m * dv - s0 * d
            k2d = dv + 0.5 * h * k1v
            k2v = -c / m * (dv + 0.5 * h * k1v) - sm * (d + 0.5 * h * k1d)
            k3d = dv + 0.5 * h * k2v
            k3v = -c / m * (dv + 0.5 * h * k2v) - sm * (d + 0.5 * h * k2d)
            k4d = dv + h * k3v
            k4v = -c / m * (dv + h * k3v) - s1 * (d + h * k3d)
            d = d + h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
            dv = dv + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        phi[0, col] = d
        phi[1, col] = dv
    return phi


def monodromy(point: BranchPoint, p: OscillatorParams, steps_per_period: int | None = None) -> np.ndarray:
    """Monodromy matrix of the linearised equation over one response period."""
    if steps_per_period is None:
        x_max = point.peak_amplitude(256)
        w_max = math.sqrt((p.k + 3 * abs(p.k_nl) * x_max**2) / p.m)
        T = point.upsilon * 2 * math.pi / point.omega
        # about 200 steps per fastest local oscillation, never fewer than 512
        steps_per_period = max(512, int(math.ceil(T * w_max / (2 * math.pi) * 200)))
    phi = _monodromy(np.asarray(point.z, dtype=float), float(point.omega), float(point.upsilon),
                     int(steps_per_period), p.m, p.c, p.k, p.k_nl)
    if not np.all(np.isfinite(phi)):
        raise IntegrationDivergence("variational equation diverged")
    return phi


def floquet_stability(point: BranchPoint, p: OscillatorParams,
                      steps_per_period: int | None = None) -> tuple[np.ndarray, bool]:
    mult = np.linalg.eigvals(monodromy(point, p, steps_per_period))
    mult = mult[np.argsort(-np.abs(mult))]
    return mult, bool(np.all(np.abs(mult) <= 1 + STABILITY_TOL))


# -- continuation ------------------------------------------------------------

@dataclass
class Branch:
    points: list = field(default_factory=list)
    parameter: str = FREQUENCY
    upsilon: int = 1
    params: Optional[OscillatorParams] = None
    closed: bool = False
    stop_reason: str = ""
    # per-point continuation data, aligned with ``points``
    tangents: list = field(default_factory=list, repr=False)
    det_signs: list = field(default_factory=list, repr=False)
    steps: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def omega(self) -> np.ndarray:
        return np.array([pt.omega for pt in self.points])

    @property
    def force(self) -> np.ndarray:
        return np.array([pt.F for pt in self.points])

    def amplitude(self, kappa: int) -> np.ndarray:
        return np.array([pt.amplitude(kappa) for pt in self.points])

    def phase(self, kappa: int) -> np.ndarray:
        return np.unwrap([pt.phase(kappa) for pt in self.points])

    def stable(self) -> np.ndarray:
        return np.array([bool(pt.stable) for pt in self.points])

    def tags(self, tag: str) -> list:
        return [i for i, pt in enumerate(self.points) if pt.bif_tag == tag]

    def to_csv(self, path) -> None:
        write_branch_csv(path, self)


class _Continuer:
    """Pseudo-arclength machinery in scaled variables u = [z / z_scale, lam / lam_scale]."""

    def __init__(self, system: HBSystem, parameter: str, fixed: float, z_scale: float, lam_scale: float):
        self.sys = system
        self.parameter = parameter
        self.fixed = fixed
        self.sz = z_scale
        self.sl = lam_scale

    def unpack(self, u):
        z = u[:-1] * self.sz
        lam = u[-1] * self.sl
        if self.parameter == FREQUENCY:
            return z, lam, self.fixed
        return z, self.fixed, lam

    def pack(self, z, omega, F):
        lam = omega if self.parameter == FREQUENCY else F
        return np.concatenate([np.asarray(z, dtype=float) / self.sz, [lam / self.sl]])

    def eval(self, u):
        z, omega, F = self.unpack(u)
        r, Jz, Jw, JF = self.sys.jacobians(z, omega, F)
        Jl = Jw if self.parameter == FREQUENCY else JF
        A = np.hstack([Jz * self.sz, (Jl * self.sl)[:, None]])
        return r, A, self.sys.scaled_norm(r, z, F)

    def tangent(self, A, t_prev):
        B = np.vstack([A, t_prev])
        rhs = np.zeros(A.shape[1])
        rhs[-1] = 1.0
        t = np.linalg.solve(B, rhs)
        return t / np.linalg.norm(t)

    def det_sign(self, A, t):
        sign, _ = np.linalg.slogdet(np.vstack([A, t]))
        return float(sign)

    def correct(self, u_pred, t, tol=RESIDUAL_TOL, max_iter=MAX_NEWTON):
        """Newton on [R(u); t.(u - u_pred)] = 0; returns (u, A, iterations) or None."""
        u = u_pred.copy()
        for it in range(max_iter + 1):
            r, A, res = self.eval(u)
            arc = float(t @ (u - u_pred))
            if res <= tol and abs(arc) < 1e-12:
                return u, A, it
            if it == max_iter or not np.all(np.isfinite(u)):
                return None
            try:
                du = np.linalg.solve(np.vstack([A, t]), -np.concatenate([r, [arc]]))
            except np.linalg.LinAlgError:
                return None
            u = u + du
        return None


def _make_point(cont: _Continuer, u, iterations, p, with_stability) -> BranchPoint:
    z, omega, F = cont.unpack(u)
    r = cont.sys.residual(z, omega, F)
    pt = BranchPoint(z=z, omega=float(omega), F=float(F), upsilon=cont.sys.upsilon,
                     residual=cont.sys.scaled_norm(r, z, F), iterations=iterations)
    if with_stability:
        pt.multipliers, pt.stable = floquet_stability(pt, p)
    return pt


def continue_branch(seed: BranchPoint, p: OscillatorParams, parameter: str = FREQUENCY,
                    direction: int = 1, lam_min: float = -math.inf, lam_max: float = math.inf,
                    h0: float = 0.01, h_min: float = 1e-4, h_max: float = 0.05,
                    z_scale: float | None = None, lam_scale: float = 1.0, max_points: int = 2000,
                    detect_closure: bool = False, with_stability: bool = True,
                    refine: bool = True, max_turn: float = 0.2) -> Branch:
    """Pseudo-arclength continuation from a converged seed.

    ``direction`` (+1/-1) sets the initial sign of the parameter change.
    Steps adapt between ``h_min`` and ``h_max`` (scaled arclength), halving on
    corrector failure or when the tangent turns by more than ``max_turn``
    radians or the corrector moves the point by more than half a step.
    The branch ends at the parameter window, after ``max_points``
    points, on closure (isolas) or when the step collapses.
    """
    sys_ = HBSystem(p, seed.N, seed.upsilon)
    if z_scale is None:
        z_scale = max(float(np.max(np.abs(seed.z))), 1e-12)
    fixed = seed.F if parameter == FREQUENCY else seed.omega
    cont = _Continuer(sys_, parameter, fixed, z_scale, lam_scale)
    u = cont.pack(seed.z, seed.omega, seed.F)
    r, A, res = cont.eval(u)
    if res > 1e-8:
        raise CorrectorFailure("seed is not a converged solution", res)
    e = np.zeros(A.shape[1])
    e[-1] = float(np.sign(direction) or 1)
    t = cont.tangent(A, e)
    if t[-1] * direction < 0:
        t = -t

    branch = Branch(parameter=parameter, upsilon=seed.upsilon, params=p)
    first = _make_point(cont, u, 0, p, with_stability)
    branch.points.append(first)
    branch.tangents.append(t)
    branch.det_signs.append(cont.det_sign(A, t))
    branch.steps.append(0.0)
    u0 = u.copy()
    h = h0
    travelled = 0.0
    while len(branch.points) < max_points:
        res = cont.correct(u + h * t, t)
        accepted = False
        if res is not None:
            u_new, A_new, it = res
            t_new = cont.tangent(A_new, t)
            turn = math.acos(min(1.0, max(-1.0, float(t_new @ t))))
            # corrections longer than the step itself mean the corrector hopped
            drift = float(np.linalg.norm(u_new - (u + h * t)))
            if (turn <= max_turn and drift <= 0.5 * h) or h <= h_min:
                accepted = True
        if not accepted:
            if h <= h_min:
                branch.stop_reason = "step-collapse"
                break
            h = max(h / 2, h_min)
            continue
        step = float(np.linalg.norm(u_new - u))
        travelled += step
        u_prev = u
        u, t = u_new, t_new
        pt = _make_point(cont, u, it, p, with_stability)
        branch.points.append(pt)
        branch.tangents.append(t)
        branch.det_signs.append(cont.det_sign(A_new, t))
        branch.steps.append(step)
        lam = u[-1] * cont.sl
        if lam < lam_min or lam > lam_max:
            branch.stop_reason = "parameter-window"
            break
        if detect_closure and travelled > 10 * h_max and _segment_distance(u0, u_prev, u) <= 0.25 * step:
            branch.closed = True
            branch.stop_reason = "closed"
            break
        if it <= 3:
            h = min(h * 1.5, h_max)
        elif it > 6:
            h = max(h / 1.5, h_min)
    else:
        branch.stop_reason = "max-points"
    branch._cont = cont
    detect_bifurcations(branch, refine=refine and with_stability)
    return branch


def _segment_distance(p, a, b) -> float:
    d = b - a
    s = float(np.clip((p - a) @ d / max(float(d @ d), 1e-300), 0.0, 1.0))
    return float(np.linalg.norm(a + s * d - p))


def _refine(branch: Branch, i: int, fn) -> BranchPoint | None:
    """Secant search between points i and i+1 for a zero of ``fn(u, t, A)``."""
    cont = branch._cont
    u_i = cont.pack(branch.points[i].z, branch.points[i].omega, branch.points[i].F)
    t_i = branch.tangents[i]
    u_j = cont.pack(branch.points[i + 1].z, branch.points[i + 1].omega, branch.points[i + 1].F)
    h_hi = float(t_i @ (u_j - u_i))
    if h_hi <= 0:
        return None

    def at(h):
        res = cont.correct(u_i + h * t_i, t_i)
        if res is None:
            return None
        u, A, it = res
        t = cont.tangent(A, t_i)
        return u, t, A, it

    a, fa = 0.0, fn(u_i, t_i, cont.eval(u_i)[1])
    b_state = at(h_hi)
    if b_state is None:
        return None
    b, fb = h_hi, fn(b_state[0], b_state[1], b_state[2])
    if fa * fb > 0:
        return None
    best = b_state
    for _ in range(40):
        hm = b - fb * (b - a) / (fb - fa) if fb != fa else 0.5 * (a + b)
        if not (min(a, b) < hm < max(a, b)):
            hm = 0.5 * (a + b)
        st = at(hm)
        if st is None:
            return None
        fm = fn(st[0], st[1], st[2])
        best = st
        if abs(fm) < 1e-12 or abs(b - a) < 1e-13:
            break
        if fa * fm < 0:
            b, fb = hm, fm
        else:
            a, fa = hm, fm
    u, t, A, it = best
    return _make_point(cont, u, it, branch.params, True), t, A


def _det_value(cont):
    def fn(u, t, A):
        sign, logdet = np.linalg.slogdet(np.vstack([A, t]))
        # scale-free value that keeps the sign of the determinant
        return sign * math.exp(min(logdet, 700.0) / A.shape[1])
    return fn


def detect_bifurcations(branch: Branch, refine: bool = True) -> Branch:
    """Tag folds (parameter component of the tangent changes sign) and branch
    points (bordered-Jacobian determinant changes sign without a fold).

    With ``refine`` the bifurcation is located by a secant search and
    inserted as an extra tagged point; otherwise the point just before the
    sign change is tagged.
    """
    if len(branch.points) < 3:
        return branch
    events = []
    for i in range(len(branch.points) - 1):
        fold = branch.tangents[i][-1] * branch.tangents[i + 1][-1] < 0
        bp = branch.det_signs[i] * branch.det_signs[i + 1] < 0
        if fold:
            events.append((i, "fold"))
        elif bp:
            events.append((i, "branch_point"))
    cont = getattr(branch, "_cont", None)
    for i, tag in reversed(events):
        refined = None
        if refine and cont is not None:
            fn = (lambda u, t, A: float(t[-1])) if tag == "fold" else _det_value(cont)
            refined = _refine(branch, i, fn)
        if refined is None:
            branch.points[i].bif_tag = tag
            continue
        pt, t, A = refined
        pt.bif_tag = tag
        branch.points.insert(i + 1, pt)
        branch.tangents.insert(i + 1, t)
        branch.det_signs.insert(i + 1, branch.det_signs[i + 1] if tag == "fold" else 0.0)
        branch.steps.insert(i + 1, float("nan"))
    return branch


def switch_branch(branch: Branch, index: int, h: float = 0.02, direction: int = 1, **kwargs) -> Branch:
    """Continue along the bifurcating branch at the branch point ``branch.points[index]``.

    The predictor follows the second null direction of the bordered
    Jacobian, orthogonal to the current tangent.
    """
    cont = branch._cont
    bp = branch.points[index]
    u = cont.pack(bp.z, bp.omega, bp.F)
    _, A, _ = cont.eval(u)
    _, s, vt = np.linalg.svd(A)
    null = vt[-2:]
    # the tangent stored at the refined point is ill-defined (2-d kernel);
    # a neighbour's tangent gives the direction of the branch being left
    j = index - 1 if index > 0 else index + 1
    t = branch.tangents[j]
    # component of the 2-d kernel orthogonal to the current tangent
    coef = null @ t
    d = null[0] * coef[1] - null[1] * coef[0]
    d /= np.linalg.norm(d)
    if direction < 0:
        d = -d
    res = cont.correct(u + h * d, d)
    if res is None:
        raise CorrectorFailure("could not step onto the bifurcating branch")
    z, omega, F = cont.unpack(res[0])
    seed = BranchPoint(z=z, omega=float(omega), F=float(F), upsilon=bp.upsilon)
    lam_dir = d[-1] if abs(d[-1]) > 1e-12 else 1.0
    kwargs.setdefault("z_scale", cont.sz)
    kwargs.setdefault("detect_closure", True)
    kwargs.setdefault("lam_scale", cont.sl)
    return continue_branch(seed, branch.params, parameter=branch.parameter,
                           direction=int(np.sign(lam_dir)), **kwargs)


def seed_isola(x: np.ndarray, theta: np.ndarray, omega: float, F: float, upsilon: int,
               p: OscillatorParams, N: int = 14, min_subharmonic: float = 0.1) -> BranchPoint:
    """Newton-corrected periodic solution fitted to a captured steady state.

    ``x`` are response samples and ``theta`` the forcing phase at each
    sample (``omega t`` for open-loop runs, the VCO phase for closed-loop
    runs), so the fit lands in the same time origin as the oracle.  For
    ``upsilon > 1`` a solution whose subharmonic line is below
    ``min_subharmonic`` times its forced line is rejected.
    """
    z = fit_fourier(np.asarray(x, dtype=float), np.asarray(theta, dtype=float) / upsilon, N)
    pt = newton_correct(z, omega, F, p, N=N, upsilon=upsilon)
    if upsilon > 1:
        sub = pt.amplitude(1)
        forced = pt.amplitude(upsilon)
        if sub < min_subharmonic * max(forced, 1e-300):
            raise CorrectorFailure("captured state carries no subharmonic content", pt.residual)
    return pt


def primary_seed(p: OscillatorParams, omega: float, F: float, N: int = 14, upsilon: int = 1) -> BranchPoint:
    """Converged solution started from the linear FRF guess (good off resonance)."""
    h = F * p.linear_frf(omega)
    z = np.zeros(2 * N + 1)
    # F sin(wt) -> x = Im(F H e^{iwt}) = Re(F H) sin + Im(F H) cos
    z[2 * upsilon - 1] = h.real
    z[2 * upsilon] = h.imag
    return newton_correct(z, omega, F, p, N=N, upsilon=upsilon)


def write_branch_csv(path, branch: Branch) -> None:
    """Columns ``omega,F,A1..AN,stable,bif_tag,mult_re1,mult_im1,mult_re2,mult_im2,Phi1..PhiN``."""
    N = branch.points[0].N if branch.points else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "F"] + [f"A{j}" for j in range(1, N + 1)]
                   + ["stable", "bif_tag", "mult_re1", "mult_im1", "mult_re2", "mult_im2"]
                   + [f"Phi{j}" for j in range(1, N + 1)])
        for pt in branch.points:
            mult = pt.multipliers if pt.multipliers is not None else np.full(2, np.nan + 0j)
            w.writerow([repr(float(pt.omega)), repr(float(pt.F))]
                       + [repr(float(a)) for a in pt.amplitudes()]
                       + [int(bool(pt.stable)), pt.bif_tag,
                          repr(float(mult[0].real)), repr(float(mult[0].imag)),
                          repr(float(mult[1].real)), repr(float(mult[1].imag))]
                       + [repr(float(pt.phase(j))) for j in range(1, N + 1)])
