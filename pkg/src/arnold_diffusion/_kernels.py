"""Compiled inner loops.

Everything here works on plain float arrays so numba can compile it; the
public modules wrap these with validation and dataclasses.

State layouts
-------------
ham  : [theta, q, I, p, A]           (A accumulates the reduced action)
var  : [theta, q, u, v, A, Phi(4x4)] (u, v velocities; Phi row-major)

Velocities equal momenta for this family, so ``ham`` and the first five
entries of ``var`` coincide.
"""

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi

# Butcher's 7-stage, order-6 explicit Runge-Kutta tableau.
RK_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 3.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 2.0 / 3.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 12.0, 1.0 / 3.0, -1.0 / 12.0, 0.0, 0.0, 0.0],
        [-1.0 / 16.0, 9.0 / 8.0, -3.0 / 16.0, -3.0 / 8.0, 0.0, 0.0],
        [0.0, 9.0 / 8.0, -3.0 / 8.0, -3.0 / 4.0, 1.0 / 2.0, 0.0],
        [9.0 / 44.0, -9.0 / 11.0, 63.0 / 44.0, 18.0 / 11.0, 0.0, -16.0 / 11.0],
    ]
)
RK_B = np.array([11.0 / 120.0, 0.0, 27.0 / 40.0, 27.0 / 40.0, -4.0 / 15.0, -4.0 / 15.0, 11.0 / 120.0])
RK_C = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 1.0 / 2.0, 1.0 / 2.0, 1.0])


@njit(cache=True)
def pot(t, th, q, eps, mu, kt, kth, kq, amp, ph):
    """V and its (theta, q) partials up to second order."""
    f = 0.0
    f_th = 0.0
    f_q = 0.0
    f_thth = 0.0
    f_thq = 0.0
    f_qq = 0.0
    for j in range(amp.shape[0]):
        wth = TWO_PI * kth[j]
        wq = TWO_PI * kq[j]
        arg = TWO_PI * kt[j] * t + wth * th + wq * q + ph[j]
        c = amp[j] * np.cos(arg)
        s = amp[j] * np.sin(arg)
        f += c
        f_th -= wth * s
        f_q -= wq * s
        f_thth -= wth * wth * c
        f_thq -= wth * wq * c
        f_qq -= wq * wq * c
    c2 = np.cos(TWO_PI * q)
    s2 = np.sin(TWO_PI * q)
    g = eps * (c2 - 1.0)
    g_q = -TWO_PI * eps * s2
    g_qq = -TWO_PI * TWO_PI * eps * c2
    F = 1.0 + mu * f
    V = g * F
    V_th = g * mu * f_th
    V_q = g_q * F + g * mu * f_q
    V_thth = g * mu * f_thth
    V_thq = g_q * mu * f_th + g * mu * f_thq
    V_qq = g_qq * F + 2.0 * g_q * mu * f_q + g * mu * f_qq
    return V, V_th, V_q, V_thth, V_thq, V_qq


@njit(cache=True)
def rhs_ham(t, y, dy, a, eps, mu, kt, kth, kq, amp, ph):
    V, V_th, V_q, _, _, _ = pot(t, y[0], y[1], eps, mu, kt, kth, kq, amp, ph)
    I = y[2]
    p = y[3]
    dy[0] = I
    dy[1] = p
    dy[2] = -V_th
    dy[3] = -V_q
    dy[4] = 0.5 * (I * I + p * p) - V - a * I + 0.5 * a * a


@njit(cache=True)
def rhs_var(t, z, dz, a, eps, mu, kt, kth, kq, amp, ph):
    V, V_th, V_q, V_thth, V_thq, V_qq = pot(t, z[0], z[1], eps, mu, kt, kth, kq, amp, ph)
    u = z[2]
    v = z[3]
    dz[0] = u
    dz[1] = v
    dz[2] = -V_th
    dz[3] = -V_q
    dz[4] = 0.5 * (u * u + v * v) - V - a * u + 0.5 * a * a
    for j in range(4):
        p0 = z[5 + j]
        p1 = z[9 + j]
        dz[5 + j] = z[13 + j]
        dz[9 + j] = z[17 + j]
        dz[13 + j] = -V_thth * p0 - V_thq * p1
        dz[17 + j] = -V_thq * p0 - V_qq * p1


@njit(cache=True)
def rk6_ham(t, y, h, out, k, tmp, a, eps, mu, kt, kth, kq, amp, ph):
    n = y.shape[0]
    for s in range(7):
        for i in range(n):
            acc = y[i]
            for j in range(s):
                acc += h * RK_A[s, j] * k[j, i]
            tmp[i] = acc
        rhs_ham(t + RK_C[s] * h, tmp, k[s], a, eps, mu, kt, kth, kq, amp, ph)
    for i in range(n):
        acc = 0.0
        for s in range(7):
            acc += RK_B[s] * k[s, i]
        out[i] = y[i] + h * acc


@njit(cache=True)
def rk6_var(t, z, h, out, k, tmp, a, eps, mu, kt, kth, kq, amp, ph):
    n = z.shape[0]
    for s in range(7):
        for i in range(n):
            acc = z[i]
            for j in range(s):
                acc += h * RK_A[s, j] * k[j, i]
            tmp[i] = acc
        rhs_var(t + RK_C[s] * h, tmp, k[s], a, eps, mu, kt, kth, kq, amp, ph)
    for i in range(n):
        acc = 0.0
        for s in range(7):
            acc += RK_B[s] * k[s, i]
        out[i] = z[i] + h * acc


@njit(cache=True)
def flow_samples(t0, y0, h, nsteps, last_h, a, eps, mu, kt, kth, kq, amp, ph):
    """Uniform-step orbit; row i holds [t, theta, q, I, p, A] after i steps.

    ``last_h`` (may be 0) is a final partial step.  Returns (samples, ok).
    """
    extra = 1 if last_h != 0.0 else 0
    out = np.empty((nsteps + 1 + extra, 6))
    k = np.empty((7, 5))
    tmp = np.empty(5)
    y = y0.copy()
    ynew = np.empty(5)
    out[0, 0] = t0
    out[0, 1:] = y
    for i in range(nsteps + extra):
        t = t0 + i * h
        hh = h if i < nsteps else last_h
        rk6_ham(t, y, hh, ynew, k, tmp, a, eps, mu, kt, kth, kq, amp, ph)
        for j in range(5):
            if not np.isfinite(ynew[j]) or abs(ynew[j]) > 1e150:
                return out[: i + 1], False
            y[j] = ynew[j]
        out[i + 1, 0] = t0 + (i + 1) * h if i < nsteps else t0 + nsteps * h + last_h
        out[i + 1, 1:] = y
    return out, True


@njit(cache=True)
def flow_final(t0, y0, h, nsteps, last_h, a, eps, mu, kt, kth, kq, amp, ph):
    k = np.empty((7, 5))
    tmp = np.empty(5)
    y = y0.copy()
    ynew = np.empty(5)
    for i in range(nsteps):
        rk6_ham(t0 + i * h, y, h, ynew, k, tmp, a, eps, mu, kt, kth, kq, amp, ph)
        y[:] = ynew
    if last_h != 0.0:
        rk6_ham(t0 + nsteps * h, y, last_h, ynew, k, tmp, a, eps, mu, kt, kth, kq, amp, ph)
        y[:] = ynew
    return y


@njit(cache=True)
def manifold_sweep(t0, th0, q0, p0, A0, I0, h, levels, direction, max_steps,
                   a, eps, mu, kt, kth, kq, amp, ph):
    """Integrate a batch of whisker orbits and record each crossing of ``levels``.

    All orbits start at q = q0 with momenta (I0, p0) and action A0 at times
    ``t0[i]`` and angles ``th0[i]``; ``h`` is signed (negative = backward).
    ``levels`` must be ordered so that ``direction * q`` increases along the
    orbit.  Crossings are landed exactly by Newton on a partial final step.

    Returns ``rec`` of shape (n_orbits, n_levels, 5) holding
    [t, theta, I, p, A] at each crossing, and a per-orbit success flag.
    """
    n = t0.shape[0]
    nl = levels.shape[0]
    rec = np.full((n, nl, 5), np.nan)
    ok = np.zeros(n, dtype=np.bool_)
    k = np.empty((7, 5))
    tmp = np.empty(5)
    y = np.empty(5)
    ynew = np.empty(5)
    yl = np.empty(5)
    for i in range(n):
        y[0] = th0[i]
        y[1] = q0
        y[2] = I0
        y[3] = p0
        y[4] = A0
        t = t0[i]
        nxt = 0
        for step in range(max_steps):
            rk6_ham(t, y, h, ynew, k, tmp, a, eps, mu, kt, kth, kq, amp, ph)
            while nxt < nl and direction * (ynew[1] - levels[nxt]) >= 0.0:
                target = levels[nxt]
                dq = ynew[1] - y[1]
                hl = h * (target - y[1]) / dq if dq != 0.0 else h
                for it in range(30):
                    rk6_ham(t, y, hl, yl, k, tmp, a, eps, mu, kt, kth, kq, amp, ph)
                    r = yl[1] - target
                    if abs(r) < 1e-15:
                        break
                    hl -= r / yl[3]
                rec[i, nxt, 0] = t + hl
                rec[i, nxt, 1] = yl[0]
                rec[i, nxt, 2] = yl[2]
                rec[i, nxt, 3] = yl[3]
                rec[i, nxt, 4] = yl[4]
                nxt += 1
            for j in range(5):
                y[j] = ynew[j]
            t += h
            if nxt == nl:
                ok[i] = True
                break
            if not np.isfinite(y[1]):
                break
    return rec, ok


@njit(cache=True)
def propagate_pieces(s0, dur, x0, v, a, step, eps, mu, kt, kth, kq, amp, ph):
    """Integrate every piece once from (x0, v) over [s0, s0 + dur].

    Returns end positions, end velocities, piece actions and the 4x4
    transition matrices in (x, v) coordinates.
    """
    n = s0.shape[0]
    x1 = np.empty((n, 2))
    v1 = np.empty((n, 2))
    act = np.empty(n)
    phi = np.empty((n, 4, 4))
    k = np.empty((7, 21))
    tmp = np.empty(21)
    z = np.empty(21)
    znew = np.empty(21)
    for i in range(n):
        m = int(np.ceil(abs(dur[i]) / step - 1e-9))
        if m < 1:
            m = 1
        h = dur[i] / m
        z[:] = 0.0
        z[0] = x0[i, 0]
        z[1] = x0[i, 1]
        z[2] = v[i, 0]
        z[3] = v[i, 1]
        z[5] = 1.0
        z[10] = 1.0
        z[15] = 1.0
        z[20] = 1.0
        for j in range(m):
            rk6_var(s0[i] + j * h, z, h, znew, k, tmp, a[i], eps, mu, kt, kth, kq, amp, ph)
            z[:] = znew
        x1[i, 0] = z[0]
        x1[i, 1] = z[1]
        v1[i, 0] = z[2]
        v1[i, 1] = z[3]
        act[i] = z[4]
        for r in range(4):
            for c in range(4):
                phi[i, r, c] = z[5 + 4 * r + c]
    return x1, v1, act, phi


@njit(cache=True)
def window_deviation(samples, window, step, eps, mu, kt, kth, kq, amp, ph):
    """Re-integrate a sampled orbit, restarting from the stored state every ``window`` time units.

    ``samples`` rows are [t, theta, q, I, p] with non-decreasing t.  Returns
    the largest max-norm gap between the propagated and the stored state.
    A non-positive ``window`` means a single start at the first sample.
    """
    n = samples.shape[0]
    k = np.empty((7, 5))
    tmp = np.empty(5)
    y = np.zeros(5)
    ynew = np.empty(5)
    worst = 0.0
    start = samples[0, 0]
    for j in range(4):
        y[j] = samples[0, j + 1]
    for i in range(1, n):
        t_prev = samples[i - 1, 0]
        dt = samples[i, 0] - t_prev
        if window > 0.0 and samples[i - 1, 0] - start >= window:
            start = t_prev
            for j in range(4):
                y[j] = samples[i - 1, j + 1]
        if dt > 0.0:
            m = int(np.ceil(dt / step - 1e-9))
            if m < 1:
                m = 1
            h = dt / m
            for s in range(m):
                rk6_ham(t_prev + s * h, y, h, ynew, k, tmp, 0.0, eps, mu, kt, kth, kq, amp, ph)
                y[:] = ynew
        for j in range(4):
            d = abs(y[j] - samples[i, j + 1])
            if not np.isfinite(d):
                return np.inf
            if d > worst:
                worst = d
    return worst
