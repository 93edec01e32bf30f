"""Compiled inner loops.

Everything that runs once per integration step lives here so that the public
modules can stay plain Python.  The Python-level operations in
:mod:`pllt.oscillator` and :mod:`pllt.harmonics` call the same functions, so
there is a single definition of the arithmetic.
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
INV_SQRT2 = 1.0 / math.sqrt(2.0)

# status codes returned by the run kernels
OK = 0
DIVERGED = 1
FILTER_DIVERGED = 2
LOOP_FAILURE = 3
UNDEFINED_PHASE = 4

# controller vector layout
C_OMEGA_O = 0
C_OMEGA = 1
C_THETA = 2
C_EINT = 3
C_PREF = 4
C_F = 5
C_KP = 6
C_KI = 7
C_EINT_MAX = 8
C_UNWRAP = 9
C_HAVE = 10
C_LOCK_T = 11
C_UNDEF_T = 12
C_PREF_TGT = 13
C_PREF_RATE = 14
C_F_TGT = 15
C_F_RATE = 16
C_SHAPE = 17
C_SAT = 18
C_ERR = 19
C_SIZE = 20

# amplitude-loop vector layout
A_ON = 0
A_FO = 1
A_CMD = 2
A_KP = 3
A_KI = 4
A_EPREV = 5
A_GAIN = 6
A_FLOOR = 7
A_SIZE = 8

# option vector layout
O_TOL = 0
O_HOLD = 1
O_GRACE = 2
O_OMEGA_FLOOR = 3
O_XMAX = 4
O_WARMUP = 5
O_SIZE = 6

# closed-loop log columns (amplitudes of the response filter go to a second array)
L_T = 0
L_OMEGA = 1
L_PHASE = 2
L_X = 3
L_F = 4
L_LOCKED = 5
L_THETA = 6
L_AF = 7
L_V = 8
L_SIZE = 9


@njit(cache=True)
def duffing_accel(x, v, f, m, c, k, knl):
    return (f - c * v - k * x - knl * x * x * x) / m


@njit(cache=True)
def rk4_update(x, v, dt, f0, fm, f1, m, c, k, knl):
    h = 0.5 * dt
    k1x = v
    k1v = duffing_accel(x, v, f0, m, c, k, knl)
    k2x = v + h * k1v
    k2v = duffing_accel(x + h * k1x, v + h * k1v, fm, m, c, k, knl)
    k3x = v + h * k2v
    k3v = duffing_accel(x + h * k2x, v + h * k2v, fm, m, c, k, knl)
    k4x = v + dt * k3v
    k4v = duffing_accel(x + dt * k3x, v + dt * k3v, f1, m, c, k, knl)
    s = dt / 6.0
    return (x + s * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            v + s * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))


@njit(cache=True)
def fill_basis(phi, n_harm, out):
    out[0] = INV_SQRT2
    s1 = math.sin(phi)
    c1 = math.cos(phi)
    s = s1
    c = c1
    for j in range(1, n_harm + 1):
        out[2 * j - 1] = s
        out[2 * j] = c
        s, c = s * c1 + c * s1, c * c1 - s * s1


@njit(cache=True)
def lms_inplace(z, sample, q, mu):
    est = 0.0
    for i in range(z.size):
        est += q[i] * z[i]
    eps = sample - est
    g = mu * eps
    for i in range(z.size):
        z[i] += g * q[i]
    return eps


@njit(cache=True)
def wrap_angle(a):
    return a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)


@njit(cache=True)
def _shape(theta, orders, rel):
    s = math.sin(theta)
    for i in range(orders.size):
        s += rel[i] * math.sin(orders[i] * theta)
    return s


@njit(cache=True)
def sine_run(mech, dt, n, F, omega, phase0, plant, x_max, decim, out):
    """Open-loop run under f = F sin(omega t + phase0); logs every ``decim`` steps.

    ``out`` rows are (t, x, v, f); row 0 is the initial state.
    Returns (status, steps_done, rows_written).
    """
    m, c, k, knl = plant[0], plant[1], plant[2], plant[3]
    x, v, t = mech[0], mech[1], mech[2]
    f0 = F * math.sin(omega * t + phase0)
    out[0, 0] = t
    out[0, 1] = x
    out[0, 2] = v
    out[0, 3] = f0
    row = 1
    status = OK
    done = 0
    for i in range(n):
        fm = F * math.sin(omega * (t + 0.5 * dt) + phase0)
        f1 = F * math.sin(omega * (t + dt) + phase0)
        xn, vn = rk4_update(x, v, dt, f0, fm, f1, m, c, k, knl)
        tn = t + dt
        if not (math.isfinite(xn) and math.isfinite(vn)) or abs(xn) > x_max:
            status = DIVERGED
            t = tn
            break
        x, v, t, f0 = xn, vn, tn, f1
        done += 1
        if (i + 1) % decim == 0:
            out[row, 0] = t
            out[row, 1] = x
            out[row, 2] = v
            out[row, 3] = f0
            row += 1
    mech[0] = x
    mech[1] = v
    mech[2] = t
    return status, done, row


@njit(cache=True)
def closed_loop_run(n, dt, plant, mech, ctrl, zx, zf, q, n_harm, kappa, upsilon,
                    mu, amp, dist_orders, dist_rel, opts, step0, decim, log, log_amp):
    """Advance the phase-locked rig by ``n`` steps.

    Per-step order: (1) VCO advances the phase and emits the force,
    (2) the plant takes one RK4 step under that force, (3) both adaptive
    filters update on the new samples (then the optional force-magnitude
    loop), (4) the phase lag is computed and unwrapped, (5) the PI law
    sets the next frequency.

    Returns (status, steps_done, rows_written).
    """
    m, c, k, knl = plant[0], plant[1], plant[2], plant[3]
    x, v, t = mech[0], mech[1], mech[2]
    tol = opts[O_TOL]
    hold = opts[O_HOLD]
    grace = opts[O_GRACE]
    floor = opts[O_OMEGA_FLOOR]
    x_max = opts[O_XMAX]
    warmup = opts[O_WARMUP]
    ix_s = 2 * kappa - 1
    if_s = 2 * upsilon - 1
    row = 0
    status = OK
    done = 0
    for i in range(n):
        # set-point ramps
        F = ctrl[C_F]
        if F != ctrl[C_F_TGT]:
            F += ctrl[C_F_RATE]
            if (ctrl[C_F_RATE] >= 0.0 and F >= ctrl[C_F_TGT]) or (
                    ctrl[C_F_RATE] < 0.0 and F <= ctrl[C_F_TGT]):
                F = ctrl[C_F_TGT]
            ctrl[C_F] = F
        pref = ctrl[C_PREF]
        if pref != ctrl[C_PREF_TGT]:
            pref += ctrl[C_PREF_RATE]
            if (ctrl[C_PREF_RATE] >= 0.0 and pref >= ctrl[C_PREF_TGT]) or (
                    ctrl[C_PREF_RATE] < 0.0 and pref <= ctrl[C_PREF_TGT]):
                pref = ctrl[C_PREF_TGT]
            ctrl[C_PREF] = pref

        # (1) VCO
        omega = ctrl[C_OMEGA]
        theta = ctrl[C_THETA]
        if amp[A_ON] > 0.0:
            a = amp[A_GAIN] * amp[A_CMD]
        else:
            a = F
        th_m = theta + 0.5 * omega * dt
        th_1 = theta + omega * dt
        s_m = _shape(th_m, dist_orders, dist_rel)
        s_1 = _shape(th_1, dist_orders, dist_rel)
        f1 = a * s_1

        # (2) plant
        xn, vn = rk4_update(x, v, dt, a * ctrl[C_SHAPE], a * s_m, f1, m, c, k, knl)
        t = t + dt
        if not (math.isfinite(xn) and math.isfinite(vn)) or abs(xn) > x_max:
            status = DIVERGED
            break
        x = xn
        v = vn
        ctrl[C_THETA] = th_1
        ctrl[C_SHAPE] = s_1

        # (3) adaptive filters
        fill_basis(th_1 / upsilon, n_harm, q)
        ex = lms_inplace(zx, x, q, mu)
        ef = lms_inplace(zf, f1, q, mu)
        if not (math.isfinite(ex) and math.isfinite(ef)):
            status = FILTER_DIVERGED
            break
        af = math.hypot(zf[if_s], zf[if_s + 1])
        if amp[A_ON] > 0.0:
            ea = amp[A_FO] - af
            cmd = amp[A_CMD] + amp[A_KP] * (ea - amp[A_EPREV]) + amp[A_KI] * ea * dt
            if cmd < amp[A_FLOOR]:
                cmd = amp[A_FLOOR]
            amp[A_CMD] = cmd
            amp[A_EPREV] = ea

        # (4) phase detector
        ax = math.hypot(zx[ix_s], zx[ix_s + 1])
        err = 0.0
        if step0 + i + 1 <= warmup:
            # filters still converging: hold the open-loop frequency
            ctrl[C_LOCK_T] = 0.0
        elif ax < 1e-12 or af < 1e-12:
            ctrl[C_UNDEF_T] += dt
            ctrl[C_LOCK_T] = 0.0
            if ctrl[C_UNDEF_T] > grace:
                status = UNDEFINED_PHASE
                done += 1
                break
        else:
            ctrl[C_UNDEF_T] = 0.0
            w = wrap_angle(math.atan2(zx[ix_s + 1], zx[ix_s])
                           - math.atan2(zf[if_s + 1], zf[if_s]))
            if ctrl[C_HAVE] > 0.0:
                u = ctrl[C_UNWRAP] + wrap_angle(w - ctrl[C_UNWRAP])
            else:
                u = pref + wrap_angle(w - pref)
                ctrl[C_HAVE] = 1.0
            ctrl[C_UNWRAP] = u
            err = u - pref
            # (5) PI frequency law with clamped integrator
            e_int = ctrl[C_EINT] + err * dt
            lim = ctrl[C_EINT_MAX]
            ctrl[C_SAT] = 0.0
            if e_int > lim:
                e_int = lim
                ctrl[C_SAT] = 1.0
            elif e_int < -lim:
                e_int = -lim
                ctrl[C_SAT] = 1.0
            ctrl[C_EINT] = e_int
            if abs(err) < tol:
                ctrl[C_LOCK_T] += dt
            else:
                ctrl[C_LOCK_T] = 0.0
        ctrl[C_ERR] = err
        omega = ctrl[C_OMEGA_O] + ctrl[C_KP] * err + ctrl[C_KI] * ctrl[C_EINT]
        ctrl[C_OMEGA] = omega
        done += 1
        if omega < floor:
            status = LOOP_FAILURE
            break

        if (step0 + i + 1) % decim == 0:
            log[row, L_T] = t
            log[row, L_OMEGA] = omega
            log[row, L_PHASE] = ctrl[C_UNWRAP] if ctrl[C_HAVE] > 0.0 else math.nan
            log[row, L_X] = x
            log[row, L_F] = f1
            log[row, L_LOCKED] = 1.0 if ctrl[C_LOCK_T] >= hold * TWO_PI / omega else 0.0
            log[row, L_THETA] = th_1
            log[row, L_AF] = af
            log[row, L_V] = v
            for j in range(1, n_harm + 1):
                log_amp[row, j - 1] = math.hypot(zx[2 * j - 1], zx[2 * j])
            row += 1
    mech[0] = x
    mech[1] = v
    mech[2] = t
    return status, done, row


@njit(cache=True)
def _line_amplitude(xs, phases):
    a = 0.0
    b = 0.0
    for i in range(xs.size):
        a += xs[i] * math.sin(phases[i])
        b += xs[i] * math.cos(phases[i])
    scale = 2.0 / xs.size
    return math.hypot(a * scale, b * scale)


@njit(cache=True)
def classify_tail(xs, phases, hi, lo, stat_tol):
    """Label a uniformly sampled tail: 0 main, 1 isola, 2 unresolved.

    ``phases`` holds the subharmonic basis phase (forcing phase / upsilon) at
    each sample; the tail must span whole response periods.
    """
    n = xs.size
    rms = 0.0
    for i in range(n):
        rms += xs[i] * xs[i]
    rms = math.sqrt(rms / n)
    if rms == 0.0:
        return 0
    sub = _line_amplitude(xs, phases)
    half = n // 2
    s1 = _line_amplitude(xs[:half], phases[:half])
    s2 = _line_amplitude(xs[half:2 * half], phases[half:2 * half])
    if abs(s1 - s2) > stat_tol * max(s1, s2, 1e-300) and max(s1, s2) > lo * rms:
        return 2
    if sub > hi * rms:
        return 1
    if sub < lo * rms:
        return 0
    return 2


@njit(cache=True, nogil=True)
def basin_cells(x0s, v0s, plant, F, omega, upsilon, steps_per_period, n_periods,
                tail_periods, hi, lo, stat_tol, x_max, labels):
    """Integrate each initial condition and classify its tail; label 3 marks divergence."""
    m, c, k, knl = plant[0], plant[1], plant[2], plant[3]
    period = TWO_PI / omega
    dt = period / steps_per_period
    n_half = 2 * steps_per_period
    table = np.empty(n_half + 1)
    for j in range(n_half + 1):
        table[j] = F * math.sin(omega * (0.5 * j * dt))
    n_total = steps_per_period * n_periods
    tail_steps = steps_per_period * tail_periods
    xs = np.empty(tail_steps)
    ph = np.empty(tail_steps)
    for j in range(tail_steps):
        ph[j] = TWO_PI * ((j % (steps_per_period * upsilon)) / (steps_per_period * upsilon))
    for cell in range(x0s.size):
        x = x0s[cell]
        v = v0s[cell]
        bad = False
        start = n_total - tail_steps
        for i in range(n_total):
            j = 2 * (i % steps_per_period)
            x, v = rk4_update(x, v, dt, table[j], table[j + 1], table[j + 2], m, c, k, knl)
            if not (abs(x) <= x_max and math.isfinite(v)):
                bad = True
                break
            if i >= start:
                xs[i - start] = x
        if bad:
            labels[cell] = 3
            continue
        # a constant offset in the basis phase does not change line amplitudes
        labels[cell] = classify_tail(xs, ph, hi, lo, stat_tol)
