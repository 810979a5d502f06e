"""Compiled per-point kernels for characteristic tracing.

Every kernel is embarrassingly parallel over trajectory start points:
each point integrates its own ODE and writes only its own output slots, so
results are bitwise deterministic for any thread count. Velocity snapshots
are interpolated linearly in time and with periodic Catmull-Rom bicubics in
space; the velocity gradient is interpolated from its own spectrally
computed samples (never by differentiating the interpolant), which keeps
the interpolated trace of grad u identically zero for solenoidal tracks.
"""

import math

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _bracket(times, t):
    """Index k with times[k] <= t <= times[k+1], clamped to the span."""
    lo = 0
    hi = times.shape[0] - 1
    if t <= times[0]:
        return 0
    if t >= times[hi]:
        return hi - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if times[mid] <= t:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True, inline="always")
def _cubic_weights(t):
    t2 = t * t
    t3 = t2 * t
    w0 = -0.5 * t + t2 - 0.5 * t3
    w1 = 1.0 - 2.5 * t2 + 1.5 * t3
    w2 = 0.5 * t + 2.0 * t2 - 1.5 * t3
    w3 = -0.5 * t2 + 0.5 * t3
    return w0, w1, w2, w3


@njit(cache=True, inline="always")
def _bicubic(vals, gx, gy, n):
    """Catmull-Rom sample of vals at fractional grid coords (gx, gy)."""
    ix = int(math.floor(gx))
    iy = int(math.floor(gy))
    tx = gx - ix
    ty = gy - iy
    wx0, wx1, wx2, wx3 = _cubic_weights(tx)
    wy0, wy1, wy2, wy3 = _cubic_weights(ty)
    acc = 0.0
    for a in range(4):
        i = (ix + a - 1) % n
        if a == 0:
            wx = wx0
        elif a == 1:
            wx = wx1
        elif a == 2:
            wx = wx2
        else:
            wx = wx3
        row = 0.0
        j0 = (iy - 1) % n
        j1 = iy % n
        j2 = (iy + 1) % n
        j3 = (iy + 2) % n
        row = wy0 * vals[i, j0] + wy1 * vals[i, j1] + wy2 * vals[i, j2] + wy3 * vals[i, j3]
        acc += wx * row
    return acc


@njit(cache=True, inline="always")
def _bilinear(vals, gx, gy, n):
    ix = int(math.floor(gx))
    iy = int(math.floor(gy))
    tx = gx - ix
    ty = gy - iy
    i0 = ix % n
    i1 = (ix + 1) % n
    j0 = iy % n
    j1 = (iy + 1) % n
    return (
        (1.0 - tx) * ((1.0 - ty) * vals[i0, j0] + ty * vals[i0, j1])
        + tx * ((1.0 - ty) * vals[i1, j0] + ty * vals[i1, j1])
    )


@njit(cache=True, inline="always")
def _clamped_bicubic(vals, gx, gy, n):
    """Bicubic clamped to the surrounding 2x2 sample range (monotone)."""
    raw = _bicubic(vals, gx, gy, n)
    ix = int(math.floor(gx))
    iy = int(math.floor(gy))
    i0 = ix % n
    i1 = (ix + 1) % n
    j0 = iy % n
    j1 = (iy + 1) % n
    lo = vals[i0, j0]
    hi = lo
    v = vals[i0, j1]
    lo = min(lo, v)
    hi = max(hi, v)
    v = vals[i1, j0]
    lo = min(lo, v)
    hi = max(hi, v)
    v = vals[i1, j1]
    lo = min(lo, v)
    hi = max(hi, v)
    return min(max(raw, lo), hi)


@njit(cache=True, inline="always")
def _velocity_at(times, comps, tt, gx, gy, n):
    """Time-linear, space-bicubic velocity sample."""
    k = _bracket(times, tt)
    dt = times[k + 1] - times[k]
    th = (tt - times[k]) / dt
    if th < 0.0:
        th = 0.0
    elif th > 1.0:
        th = 1.0
    ux0 = _bicubic(comps[k, 0], gx, gy, n)
    uy0 = _bicubic(comps[k, 1], gx, gy, n)
    ux1 = _bicubic(comps[k + 1, 0], gx, gy, n)
    uy1 = _bicubic(comps[k + 1, 1], gx, gy, n)
    return (1.0 - th) * ux0 + th * ux1, (1.0 - th) * uy0 + th * uy1


@njit(cache=True, inline="always")
def _grad_at(times, grads, tt, gx, gy, n):
    k = _bracket(times, tt)
    dt = times[k + 1] - times[k]
    th = (tt - times[k]) / dt
    if th < 0.0:
        th = 0.0
    elif th > 1.0:
        th = 1.0
    g = np.empty(4)
    for c in range(4):
        a = _bicubic(grads[k, c], gx, gy, n)
        b = _bicubic(grads[k + 1, c], gx, gy, n)
        g[c] = (1.0 - th) * a + th * b
    return g[0], g[1], g[2], g[3]


@njit(cache=True, parallel=True)
def rk4_flow(times, comps, grads, x0, y0, t_from, t_to, n_sub, length, want_dx,
             out_x, out_y, out_a):
    """Integrate dX/dt = u(t, X) (and optionally dA/dt = grad_u(t, X) A).

    out_a has shape (4, P) holding the DX entries (xx, xy, yx, yy).
    """
    n = comps.shape[2]
    h = length / n
    dt = (t_to - t_from) / n_sub
    for pidx in prange(x0.shape[0]):
        x = x0[pidx]
        y = y0[pidx]
        a11 = 1.0
        a12 = 0.0
        a21 = 0.0
        a22 = 1.0
        for step in range(n_sub):
            t0 = t_from + step * dt
            # stage 1
            k1x, k1y = _velocity_at(times, comps, t0, (x / h) % n, (y / h) % n, n)
            if want_dx:
                g11, g12, g21, g22 = _grad_at(times, grads, t0, (x / h) % n, (y / h) % n, n)
                b11 = g11 * a11 + g12 * a21
                b12 = g11 * a12 + g12 * a22
                b21 = g21 * a11 + g22 * a21
                b22 = g21 * a12 + g22 * a22
            else:
                b11 = b12 = b21 = b22 = 0.0
            # stage 2
            xx = x + 0.5 * dt * k1x
            yy = y + 0.5 * dt * k1y
            tm = t0 + 0.5 * dt
            k2x, k2y = _velocity_at(times, comps, tm, (xx / h) % n, (yy / h) % n, n)
            if want_dx:
                g11, g12, g21, g22 = _grad_at(times, grads, tm, (xx / h) % n, (yy / h) % n, n)
                c11 = g11 * (a11 + 0.5 * dt * b11) + g12 * (a21 + 0.5 * dt * b21)
                c12 = g11 * (a12 + 0.5 * dt * b12) + g12 * (a22 + 0.5 * dt * b22)
                c21 = g21 * (a11 + 0.5 * dt * b11) + g22 * (a21 + 0.5 * dt * b21)
                c22 = g21 * (a12 + 0.5 * dt * b12) + g22 * (a22 + 0.5 * dt * b22)
            else:
                c11 = c12 = c21 = c22 = 0.0
            # stage 3
            xx = x + 0.5 * dt * k2x
            yy = y + 0.5 * dt * k2y
            k3x, k3y = _velocity_at(times, comps, tm, (xx / h) % n, (yy / h) % n, n)
            if want_dx:
                g11, g12, g21, g22 = _grad_at(times, grads, tm, (xx / h) % n, (yy / h) % n, n)
                d11 = g11 * (a11 + 0.5 * dt * c11) + g12 * (a21 + 0.5 * dt * c21)
                d12 = g11 * (a12 + 0.5 * dt * c12) + g12 * (a22 + 0.5 * dt * c22)
                d21 = g21 * (a11 + 0.5 * dt * c11) + g22 * (a21 + 0.5 * dt * c21)
                d22 = g21 * (a12 + 0.5 * dt * c12) + g22 * (a22 + 0.5 * dt * c22)
            else:
                d11 = d12 = d21 = d22 = 0.0
            # stage 4
            xx = x + dt * k3x
            yy = y + dt * k3y
            t1 = t0 + dt
            k4x, k4y = _velocity_at(times, comps, t1, (xx / h) % n, (yy / h) % n, n)
            if want_dx:
                g11, g12, g21, g22 = _grad_at(times, grads, t1, (xx / h) % n, (yy / h) % n, n)
                e11 = g11 * (a11 + dt * d11) + g12 * (a21 + dt * d21)
                e12 = g11 * (a12 + dt * d12) + g12 * (a22 + dt * d22)
                e21 = g21 * (a11 + dt * d11) + g22 * (a21 + dt * d21)
                e22 = g21 * (a12 + dt * d12) + g22 * (a22 + dt * d22)
            else:
                e11 = e12 = e21 = e22 = 0.0
            x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            if want_dx:
                a11 += dt / 6.0 * (b11 + 2.0 * c11 + 2.0 * d11 + e11)
                a12 += dt / 6.0 * (b12 + 2.0 * c12 + 2.0 * d12 + e12)
                a21 += dt / 6.0 * (b21 + 2.0 * c21 + 2.0 * d21 + e21)
                a22 += dt / 6.0 * (b22 + 2.0 * c22 + 2.0 * d22 + e22)
        out_x[pidx] = x
        out_y[pidx] = y
        out_a[0, pidx] = a11
        out_a[1, pidx] = a12
        out_a[2, pidx] = a21
        out_a[3, pidx] = a22


@njit(cache=True, parallel=True)
def rk4_foot_with_source(times, comps, src_times, src_vals, has_src,
                         x0, y0, t_from, t_to, n_sub, length,
                         out_x, out_y, out_src):
    """Trace characteristics from t_from to t_to, accumulating the source.

    out_src collects the signed integral of f along the path from t_from to
    t_to by the trapezoid rule on the substep nodes (bilinear in space,
    linear in time).
    """
    n = comps.shape[2]
    h = length / n
    dt = (t_to - t_from) / n_sub
    for pidx in prange(x0.shape[0]):
        x = x0[pidx]
        y = y0[pidx]
        acc = 0.0
        f_prev = 0.0
        if has_src:
            k = _bracket(src_times, t_from)
            sdt = src_times[k + 1] - src_times[k]
            th = min(max((t_from - src_times[k]) / sdt, 0.0), 1.0)
            f_prev = (1.0 - th) * _bilinear(src_vals[k], (x / h) % n, (y / h) % n, n) + th * _bilinear(
                src_vals[k + 1], (x / h) % n, (y / h) % n, n
            )
        for step in range(n_sub):
            t0 = t_from + step * dt
            k1x, k1y = _velocity_at(times, comps, t0, (x / h) % n, (y / h) % n, n)
            xx = x + 0.5 * dt * k1x
            yy = y + 0.5 * dt * k1y
            tm = t0 + 0.5 * dt
            k2x, k2y = _velocity_at(times, comps, tm, (xx / h) % n, (yy / h) % n, n)
            xx = x + 0.5 * dt * k2x
            yy = y + 0.5 * dt * k2y
            k3x, k3y = _velocity_at(times, comps, tm, (xx / h) % n, (yy / h) % n, n)
            xx = x + dt * k3x
            yy = y + dt * k3y
            t1 = t0 + dt
            k4x, k4y = _velocity_at(times, comps, t1, (xx / h) % n, (yy / h) % n, n)
            x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            if has_src:
                k = _bracket(src_times, t1)
                sdt = src_times[k + 1] - src_times[k]
                th = min(max((t1 - src_times[k]) / sdt, 0.0), 1.0)
                f_cur = (1.0 - th) * _bilinear(src_vals[k], (x / h) % n, (y / h) % n, n) + th * _bilinear(
                    src_vals[k + 1], (x / h) % n, (y / h) % n, n
                )
                acc += 0.5 * dt * (f_prev + f_cur)
                f_prev = f_cur
        out_x[pidx] = x
        out_y[pidx] = y
        out_src[pidx] = acc


@njit(cache=True, parallel=True)
def interp_grid(vals, xs, ys, length, mode, out):
    """Sample vals at physical points (xs, ys); mode 0 bilinear, 1 clamped bicubic."""
    n = vals.shape[0]
    h = length / n
    for pidx in prange(xs.shape[0]):
        gx = (xs[pidx] / h) % n
        gy = (ys[pidx] / h) % n
        if mode == 0:
            out[pidx] = _bilinear(vals, gx, gy, n)
        else:
            out[pidx] = _clamped_bicubic(vals, gx, gy, n)
