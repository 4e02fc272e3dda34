"""Compiled DOPRI5 for ``X' = (G0 + sum_k a_k(t) G_k) X + s(t)``.

``a_k(t)`` is a piecewise-linear grid control times a modulation
``amp * cos(omega t + phase)`` (``kind = 1``) or ``amp`` (``kind = 0``).
The optional source is ``w(t) (c_rho Y(t) + v0 + (t / T) v1)`` where ``Y``
is a previously computed dense solution and ``w`` a piecewise-linear
weight. Mirrors :func:`qocgpm.integrate.dopri5` step for step.
"""

import math

import numpy as np
from numba import njit

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 6))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423,
])


@njit(cache=True)
def _weight(t, wt, wv):
    n = wt.shape[0]
    if n == 1 or t <= wt[0]:
        return wv[0]
    if t >= wt[n - 1]:
        return wv[n - 1]
    i = np.searchsorted(wt, t, side="right") - 1
    span = wt[i + 1] - wt[i]
    if span <= 0.0:
        return wv[i + 1]
    return wv[i] + (t - wt[i]) / span * (wv[i + 1] - wv[i])


@njit(cache=True)
def _weight_piece(t, ref, wt, wv):
    """Affine piece containing ``ref``, evaluated (extended) at ``t``."""
    n = wt.shape[0]
    i = np.searchsorted(wt, ref, side="right") - 1
    if n == 1 or i >= n - 1:
        return wv[n - 1]
    if i < 0:
        return wv[0]
    return wv[i] + (t - wt[i]) / (wt[i + 1] - wt[i]) * (wv[i + 1] - wv[i])


@njit(cache=True)
def _rhs(t, y, g0, gk, grid, horizon, kind, amp, omega, phase, reverse, src, a, mat, out,
         ref, piecewise):
    (src_on, f_starts, f_h, f_coeffs, wt, wv, c_rho, v0, v1) = src
    tt = horizon - t if reverse else t
    m_int = grid.shape[0] - 1
    x = tt / horizon * m_int
    m = int(math.floor(x))
    if m >= m_int:
        m = m_int - 1
    elif m < 0:
        m = 0
    w = x - m
    for k in range(grid.shape[1]):
        v = grid[m, k] + w * (grid[m + 1, k] - grid[m, k])
        if kind[k] == 1:
            v *= amp[k] * math.cos(omega[k] * tt + phase[k])
        else:
            v *= amp[k]
        a[k] = v
    n = g0.shape[0]
    for i in range(n):
        for j in range(n):
            s = g0[i, j]
            for k in range(gk.shape[0]):
                s += a[k] * gk[k, i, j]
            mat[i, j] = s
    for i in range(n):
        for c in range(y.shape[1]):
            s = 0j
            for j in range(n):
                s += mat[i, j] * y[j, c]
            out[i, c] = s
    if src_on:
        if piecewise:
            ws = _weight_piece(tt, horizon - ref if reverse else ref, wt, wv)
        else:
            ws = _weight(tt, wt, wv)
        if ws != 0.0:
            ns = f_starts.shape[0]
            idx = np.searchsorted(f_starts, tt, side="right") - 1
            if idx < 0:
                idx = 0
            elif idx >= ns:
                idx = ns - 1
            th = (tt - f_starts[idx]) / f_h[idx]
            th1 = 1.0 - th
            frac = tt / horizon
            for i in range(n):
                for c in range(y.shape[1]):
                    r = f_coeffs[idx, :, i, c]
                    yv = r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])))
                    out[i, c] += ws * (c_rho * yv + v0[i, c] + frac * v1[i, c])
    if reverse:
        for i in range(n):
            for c in range(y.shape[1]):
                out[i, c] = -out[i, c]


@njit(cache=True)
def dopri5_linear(g0, gk, grid, horizon, kind, amp, omega, phase, src, y0, reverse,
                  rtol, atol, first_step, max_step, max_steps, stops):
    """Return ``(starts, steps, coeffs, status)``; ``status`` 0 ok, 1 underflow,
    2 too many steps, 3 non-finite. Steps land exactly on ``stops``."""
    pw = stops.shape[0] > 0
    n, ncol = y0.shape
    t0, t1 = 0.0, horizon
    hmax = min(max_step, t1 - t0)
    a = np.empty(gk.shape[0])
    mat = np.empty((n, n), dtype=np.complex128)
    k = np.empty((7, n, ncol), dtype=np.complex128)
    y = y0.copy()
    ys = np.empty_like(y)
    size = n * ncol
    _rhs(t0, y, g0, gk, grid, horizon, kind, amp, omega, phase, reverse, src, a, mat, k[0],
         t0, pw)

    if first_step > 0:
        h = min(first_step, hmax)
    else:
        d0 = 0.0
        d1 = 0.0
        for i in range(n):
            for c in range(ncol):
                sc = atol + rtol * abs(y[i, c])
                d0 += (abs(y[i, c]) / sc) ** 2
                d1 += (abs(k[0, i, c]) / sc) ** 2
        d0 = math.sqrt(d0 / size)
        d1 = math.sqrt(d1 / size)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, hmax)
        for i in range(n):
            for c in range(ncol):
                ys[i, c] = y[i, c] + h0 * k[0, i, c]
        _rhs(t0 + h0, ys, g0, gk, grid, horizon, kind, amp, omega, phase, reverse, src, a, mat,
             k[1], t0, pw)
        d2 = 0.0
        for i in range(n):
            for c in range(ncol):
                sc = atol + rtol * abs(y[i, c])
                d2 += (abs(k[1, i, c] - k[0, i, c]) / sc) ** 2
        d2 = math.sqrt(d2 / size) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        h = min(100 * h0, h1, hmax)

    cap = 256
    starts = np.empty(cap)
    steps = np.empty(cap)
    coeffs = np.empty((cap, 5, n, ncol), dtype=np.complex128)
    h_min = 16 * 2.220446049250313e-16 * max(abs(t0), abs(t1), 1.0)
    rejected = False
    n_acc = 0
    t = t0
    si = 0
    refresh = pw
    while t < t1:
        if n_acc >= max_steps:
            return starts[:n_acc], steps[:n_acc], coeffs[:n_acc], 2
        if h < h_min:
            return starts[:n_acc], steps[:n_acc], coeffs[:n_acc], 1
        while si < stops.shape[0] and stops[si] <= t + h_min:
            si += 1
        hit = si < stops.shape[0] and t + h >= stops[si] - h_min
        if hit:
            h = stops[si] - t
        if t + h > t1 or t1 - (t + h) < h_min:
            h = t1 - t
            hit = False
        ref = t + 0.5 * h
        if refresh:
            _rhs(t, y, g0, gk, grid, horizon, kind, amp, omega, phase, reverse, src, a, mat,
                 k[0], ref, pw)
            refresh = False
        for s in range(1, 7):
            for i in range(n):
                for c in range(ncol):
                    acc = y[i, c]
                    for r in range(s):
                        acc += h * _A[s, r] * k[r, i, c]
                    ys[i, c] = acc
            _rhs(t + _C[s] * h, ys, g0, gk, grid, horizon, kind, amp, omega, phase,
                 reverse, src, a, mat, k[s], ref, pw)
        err = 0.0
        for i in range(n):
            for c in range(ncol):
                e = 0j
                for r in range(7):
                    e += _E[r] * k[r, i, c]
                sc = atol + rtol * max(abs(y[i, c]), abs(ys[i, c]))
                err += (abs(h * e) / sc) ** 2
        err = math.sqrt(err / size)
        if not math.isfinite(err):
            return starts[:n_acc], steps[:n_acc], coeffs[:n_acc], 3
        if err <= 1.0:
            if n_acc == cap:
                cap *= 2
                s2 = np.empty(cap)
                s2[:n_acc] = starts
                starts = s2
                h2 = np.empty(cap)
                h2[:n_acc] = steps
                steps = h2
                c2 = np.empty((cap, 5, n, ncol), dtype=np.complex128)
                c2[:n_acc] = coeffs
                coeffs = c2
            for i in range(n):
                for c in range(ncol):
                    ydiff = ys[i, c] - y[i, c]
                    bspl = h * k[0, i, c] - ydiff
                    dd = 0j
                    for r in range(7):
                        dd += _D[r] * k[r, i, c]
                    coeffs[n_acc, 0, i, c] = y[i, c]
                    coeffs[n_acc, 1, i, c] = ydiff
                    coeffs[n_acc, 2, i, c] = bspl
                    coeffs[n_acc, 3, i, c] = ydiff - h * k[6, i, c] - bspl
                    coeffs[n_acc, 4, i, c] = h * dd
                    y[i, c] = ys[i, c]
                    k[0, i, c] = k[6, i, c]
            starts[n_acc] = t
            steps[n_acc] = h
            n_acc += 1
            t = stops[si] if hit else t + h
            refresh = hit
            if err == 0.0:
                fac = 10.0
            else:
                fac = min(10.0, max(0.2, 0.9 * err ** -0.2))
            if rejected:
                fac = min(fac, 1.0)
            h = min(h * fac, hmax)
            rejected = False
        else:
            h = h * max(0.2, 0.9 * err ** -0.2)
            rejected = True
    return starts[:n_acc], steps[:n_acc], coeffs[:n_acc], 0
