"""Online Fourier decomposition by LMS adaptive filtering.

A streaming signal is synthesised as ``Q(phi) @ z`` where ``Q`` is the row

    [1/sqrt(2), sin(phi), cos(phi), ..., sin(N phi), cos(N phi)]

and ``phi`` is the carrier phase divided by the subharmonic index.  The weights
``z`` follow the LMS rule ``z += mu * eps * Q`` with ``eps = sample - Q @ z``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import ConfigError, FilterDivergence, UndefinedPhase

#: Amplitudes below this are treated as having no defined phase.
PHASE_FLOOR = 1e-12


@dataclass(frozen=True)
class FilterConfig:
    N: int = 3
    upsilon: int = 1
    mu: float = 1e-4

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("harmonic count must be a positive integer", key="filter.n")
        if int(self.upsilon) != self.upsilon or self.upsilon < 1:
            raise ConfigError("subharmonic index must be a positive integer", key="filter.upsilon")
        # averaged Q^T Q is I/2 for this basis, so mu < 2 / lambda_max = 4
        if not (0 < self.mu < stability_bound()):
            raise ConfigError(f"step size must lie in (0, {stability_bound()})", key="filter.mu")

    @property
    def size(self) -> int:
        return 2 * self.N + 1


def stability_bound() -> float:
    """Upper step-size bound 2 / lambda_max of the time-averaged Q^T Q."""
    return 2.0 / 0.5


def basis_eval(phi: float, N: int) -> np.ndarray:
    """Basis row at the (already divided) carrier phase ``phi``."""
    out = np.empty(2 * N + 1)
    K.fill_basis(float(phi), int(N), out)
    return out


def lms_update(z: np.ndarray, sample: float, Q: np.ndarray, mu: float) -> tuple[np.ndarray, float]:
    """Return the updated weights and the synthesis error before the update."""
    z_new = np.array(z, dtype=float, copy=True)
    eps = K.lms_inplace(z_new, float(sample), np.asarray(Q, dtype=float), float(mu))
    if not math.isfinite(eps):
        raise FilterDivergence("synthesis error is not finite")
    return z_new, eps


def _check_index(z, kappa):
    n = (len(z) - 1) // 2
    if not 1 <= kappa <= n:
        raise IndexError(f"harmonic index {kappa} outside 1..{n}")


def harmonic_amplitude(z: np.ndarray, kappa: int) -> float:
    _check_index(z, kappa)
    return math.hypot(z[2 * kappa - 1], z[2 * kappa])


def harmonic_phase(z: np.ndarray, kappa: int) -> float:
    """Phase of ``A sin(kappa phi + Phi)``, in (-pi, pi]."""
    if harmonic_amplitude(z, kappa) < PHASE_FLOOR:
        raise UndefinedPhase(f"harmonic {kappa} has zero amplitude")
    return wrap_angle(math.atan2(z[2 * kappa], z[2 * kappa - 1]))


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    return K.wrap_angle(float(a))


def phase_lag(resp_z: np.ndarray, force_z: np.ndarray, kappa: int, upsilon: int) -> float:
    """Lag of response harmonic ``kappa`` relative to force harmonic ``upsilon``, wrapped."""
    return wrap_angle(harmonic_phase(resp_z, kappa) - harmonic_phase(force_z, upsilon))


class PhaseUnwrapper:
    """Turns a wrapped phase stream into a continuous one.

    Each new value is shifted by the multiple of 2 pi that minimises the jump
    from the previous output.  The first value is placed within pi of
    ``anchor``.
    """

    def __init__(self, anchor: float = 0.0):
        self.anchor = anchor
        self.value: float | None = None

    def __call__(self, wrapped: float) -> float:
        ref = self.anchor if self.value is None else self.value
        self.value = ref + wrap_angle(wrapped - ref)
        return self.value


@dataclass
class AdaptiveFilter:
    """One LMS filter on one signal; ``phi`` is the divided carrier phase last used."""

    cfg: FilterConfig
    z: np.ndarray = None
    phi: float = 0.0
    eps: float = 0.0
    _q: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.z is None:
            self.z = np.zeros(self.cfg.size)
        if len(self.z) != self.cfg.size:
            raise ValueError("weight vector must have length 2N+1")
        self._q = np.empty(self.cfg.size)

    def update(self, sample: float, theta: float) -> float:
        """Consume one sample taken at carrier phase ``theta``; returns the error."""
        self.phi = theta / self.cfg.upsilon
        K.fill_basis(self.phi, self.cfg.N, self._q)
        self.eps = K.lms_inplace(self.z, float(sample), self._q, self.cfg.mu)
        if not math.isfinite(self.eps):
            raise FilterDivergence("synthesis error is not finite")
        return self.eps

    def amplitude(self, kappa: int) -> float:
        return harmonic_amplitude(self.z, kappa)

    def phase(self, kappa: int) -> float:
        return harmonic_phase(self.z, kappa)

    def amplitudes(self) -> np.ndarray:
        return np.hypot(self.z[1::2], self.z[2::2])

    def reconstruct(self, phi) -> np.ndarray:
        """Synthesised signal at divided phases ``phi``."""
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        j = np.arange(1, self.cfg.N + 1)
        out = np.full(phi.shape, self.z[0] * K.INV_SQRT2)
        out += np.sin(np.outer(phi, j)) @ self.z[1::2] + np.cos(np.outer(phi, j)) @ self.z[2::2]
        return out


def fit_fourier(samples: np.ndarray, phi: np.ndarray, N: int) -> np.ndarray:
    """Batch least-squares weights on the same basis (used to seed the oracle)."""
    j = np.arange(1, N + 1)
    cols = [np.full(phi.shape, K.INV_SQRT2)]
    s = np.sin(np.outer(phi, j))
    c = np.cos(np.outer(phi, j))
    for i in range(N):
        cols += [s[:, i], c[:, i]]
    z, *_ = np.linalg.lstsq(np.column_stack(cols), samples, rcond=None)
    return z


def write_diagnostics_csv(path, t, eps, z_hist: np.ndarray, decimation: int = 1) -> None:
    """Per-sample ``t, epsilon, A_1..A_N, Phi_1..Phi_N``; undefined phases are written as nan."""
    z_hist = np.atleast_2d(z_hist)
    n = (z_hist.shape[1] - 1) // 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "epsilon"] + [f"A_{j}" for j in range(1, n + 1)]
                   + [f"Phi_{j}" for j in range(1, n + 1)])
        for i in range(0, len(t), decimation):
            z = z_hist[i]
            amps = np.hypot(z[1::2], z[2::2])
            phases = [math.atan2(z[2 * j], z[2 * j - 1]) if amps[j - 1] >= PHASE_FLOOR else math.nan
                      for j in range(1, n + 1)]
            w.writerow([repr(float(t[i])), repr(float(eps[i]))]
                       + [repr(float(a)) for a in amps] + [repr(float(p)) for p in phases])
