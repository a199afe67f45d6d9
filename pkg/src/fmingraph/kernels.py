"""Hot loops: the Jacobi RK4 scan and the polar flux residual/Jacobian.

Every kernel exists twice: a vectorised numpy version and an explicit loop
compiled with numba. ``BACKEND`` (see :mod:`fmingraph._accel`) decides which
one the public wrappers dispatch to; both are importable for parity tests and
benchmarks.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import BACKEND, njit

__all__ = [
    "BACKEND",
    "rk4_step_matrices",
    "jacobi_scan",
    "polar_residual",
    "polar_jacobian",
    "polar_residual_numpy",
    "polar_residual_numba",
    "polar_jacobian_numpy",
    "polar_jacobian_numba",
    "jacobi_scan_numpy",
    "jacobi_scan_numba",
]


# ---------------------------------------------------------------------------
# Jacobi equation f'' = k^2 f as a product of exact RK4 step matrices
# ---------------------------------------------------------------------------


def rk4_step_matrices(k2s, k2m, k2e, h):
    """Entries of the classical RK4 propagator for (f, f')' = (f', k^2 f).

    ``k2s``, ``k2m``, ``k2e`` hold k^2 at the start, midpoint and end of each
    step and ``h`` the step lengths. Because the system is linear, one RK4
    step is exactly multiplication by a 2x2 matrix polynomial in h.
    """
    k2s = np.asarray(k2s, dtype=float)
    k2m = np.asarray(k2m, dtype=float)
    k2e = np.asarray(k2e, dtype=float)
    h = np.asarray(h, dtype=float)
    h2 = h * h
    h4 = h2 * h2
    p11 = 1.0 + h2 * (k2s + 2.0 * k2m) / 6.0 + h4 * k2m * k2s / 24.0
    p12 = h + h * h2 * k2m / 6.0
    p21 = h * (k2s + 4.0 * k2m + k2e) / 6.0 + h * h2 * k2m * (k2s + k2e) / 12.0
    p22 = 1.0 + h2 * (2.0 * k2m + k2e) / 6.0 + h4 * k2m * k2e / 24.0
    return p11, p12, p21, p22


def jacobi_scan_numpy(k2s, k2m, k2e, h, threshold):
    """Propagate (f, f') from (0, 1); rescale by f whenever f > threshold.

    Returns scaled values and the cumulative log scale, so that the true
    solution is ``f = fs * exp(logscale)``.
    """
    p11, p12, p21, p22 = rk4_step_matrices(k2s, k2m, k2e, h)
    n = p11.shape[0]
    fs = np.empty(n + 1)
    fps = np.empty(n + 1)
    logscale = np.empty(n + 1)
    f, fp, acc = 0.0, 1.0, 0.0
    fs[0], fps[0], logscale[0] = f, fp, acc
    a, b, c, d = p11.tolist(), p12.tolist(), p21.tolist(), p22.tolist()
    for i in range(n):
        f, fp = a[i] * f + b[i] * fp, c[i] * f + d[i] * fp
        if f > threshold:
            acc += math.log(f)
            fp /= f
            f = 1.0
        fs[i + 1], fps[i + 1], logscale[i + 1] = f, fp, acc
    return fs, fps, logscale


@njit
def _jacobi_scan_loop(k2s, k2m, k2e, h, threshold):
    n = k2s.shape[0]
    fs = np.empty(n + 1)
    fps = np.empty(n + 1)
    logscale = np.empty(n + 1)
    f = 0.0
    fp = 1.0
    acc = 0.0
    fs[0] = f
    fps[0] = fp
    logscale[0] = acc
    for i in range(n):
        hi = h[i]
        h2 = hi * hi
        h4 = h2 * h2
        ks = k2s[i]
        km = k2m[i]
        ke = k2e[i]
        p11 = 1.0 + h2 * (ks + 2.0 * km) / 6.0 + h4 * km * ks / 24.0
        p12 = hi + hi * h2 * km / 6.0
        p21 = hi * (ks + 4.0 * km + ke) / 6.0 + hi * h2 * km * (ks + ke) / 12.0
        p22 = 1.0 + h2 * (2.0 * km + ke) / 6.0 + h4 * km * ke / 24.0
        fn = p11 * f + p12 * fp
        fpn = p21 * f + p22 * fp
        f = fn
        fp = fpn
        if f > threshold:
            acc += math.log(f)
            fp /= f
            f = 1.0
        fs[i + 1] = f
        fps[i + 1] = fp
        logscale[i + 1] = acc
    return fs, fps, logscale


def jacobi_scan_numba(k2s, k2m, k2e, h, threshold):
    return _jacobi_scan_loop(
        np.ascontiguousarray(k2s, dtype=np.float64),
        np.ascontiguousarray(k2m, dtype=np.float64),
        np.ascontiguousarray(k2e, dtype=np.float64),
        np.ascontiguousarray(np.broadcast_to(np.asarray(h, dtype=np.float64), np.shape(k2s))),
        float(threshold),
    )


# ---------------------------------------------------------------------------
# Polar finite-volume operator
#
# Layout: u has shape (N+1, M); row 0 is the origin (all entries equal), rows
# 1..N are rings at r_i = i*dr, row N is the Dirichlet boundary. Unknown index
# of node (i, j) is 0 for i == 0 and 1 + (i-1)*M + j otherwise.
# ---------------------------------------------------------------------------


def polar_residual_numpy(u, fh, fn, dr, dth, cap, mp, rp, phi, cos_t, sin_t):
    n_rows, m = u.shape
    nr = n_rows - 1
    up = np.roll(u, -1, axis=1)
    um = np.roll(u, 1, axis=1)

    # radial faces i+1/2, i = 0..N-1
    p = (u[1:] - u[:-1]) / dr
    qa = (up[:-1] - um[:-1] + up[1:] - um[1:]) / (4.0 * dth)
    q = qa / fh[:, None]
    flux_r = fh[:, None] * dth * p / np.sqrt(1.0 + p * p + q * q)

    # angular faces (i, j+1/2), i = 1..N-1
    fi = fn[1:nr, None]
    qt = (up[1:nr] - u[1:nr]) / (fi * dth)
    pa = (u[2:] - u[:-2] + np.roll(u[2:], -1, axis=1) - np.roll(u[:-2], -1, axis=1)) / (4.0 * dr)
    flux_t = dr * qt / np.sqrt(1.0 + pa * pa + qt * qt)

    div = (flux_r[1:] - flux_r[:-1] + flux_t - np.roll(flux_t, 1, axis=1)) / (fi * dr * dth)
    pc = (u[2:] - u[:-2]) / (2.0 * dr)
    qc = (up[1:nr] - um[1:nr]) / (2.0 * dth * fi)
    wc = np.sqrt(1.0 + pc * pc + qc * qc)
    rhs = (mp[1:nr, None] * pc - rp[1:nr]) / wc

    out = np.empty(1 + nr * m)
    gx = 2.0 * np.dot(u[1], cos_t) / (m * dr)
    gy = 2.0 * np.dot(u[1], sin_t) / (m * dr)
    w0 = math.sqrt(1.0 + gx * gx + gy * gy)
    out[0] = flux_r[0].sum() / cap + rp[0, 0] / w0
    out[1 : 1 + (nr - 1) * m] = (div - rhs).ravel()
    out[1 + (nr - 1) * m :] = u[nr] - phi
    return out


@njit
def _polar_residual_loop(u, fh, fn, dr, dth, cap, mp, rp, phi, cos_t, sin_t):
    n_rows, m = u.shape
    nr = n_rows - 1
    out = np.zeros(1 + nr * m)
    # radial fluxes
    flux_r = np.empty((nr, m))
    for i in range(nr):
        for j in range(m):
            jp = (j + 1) % m
            jm = (j - 1) % m
            p = (u[i + 1, j] - u[i, j]) / dr
            q = (u[i, jp] - u[i, jm] + u[i + 1, jp] - u[i + 1, jm]) / (4.0 * dth * fh[i])
            flux_r[i, j] = fh[i] * dth * p / math.sqrt(1.0 + p * p + q * q)
    flux_t = np.empty((nr, m))
    for i in range(1, nr):
        for j in range(m):
            jp = (j + 1) % m
            q = (u[i, jp] - u[i, j]) / (fn[i] * dth)
            pa = (u[i + 1, j] - u[i - 1, j] + u[i + 1, jp] - u[i - 1, jp]) / (4.0 * dr)
            flux_t[i, j] = dr * q / math.sqrt(1.0 + pa * pa + q * q)
    gx = 0.0
    gy = 0.0
    tot = 0.0
    for j in range(m):
        gx += u[1, j] * cos_t[j]
        gy += u[1, j] * sin_t[j]
        tot += flux_r[0, j]
    gx *= 2.0 / (m * dr)
    gy *= 2.0 / (m * dr)
    out[0] = tot / cap + rp[0, 0] / math.sqrt(1.0 + gx * gx + gy * gy)
    for i in range(1, nr):
        vol = fn[i] * dr * dth
        for j in range(m):
            jp = (j + 1) % m
            jm = (j - 1) % m
            div = (flux_r[i, j] - flux_r[i - 1, j] + flux_t[i, j] - flux_t[i, jm]) / vol
            pc = (u[i + 1, j] - u[i - 1, j]) / (2.0 * dr)
            qc = (u[i, jp] - u[i, jm]) / (2.0 * dth * fn[i])
            wc = math.sqrt(1.0 + pc * pc + qc * qc)
            out[1 + (i - 1) * m + j] = div - (mp[i] * pc - rp[i, j]) / wc
    for j in range(m):
        out[1 + (nr - 1) * m + j] = u[nr, j] - phi[j]
    return out


def polar_residual_numba(u, fh, fn, dr, dth, cap, mp, rp, phi, cos_t, sin_t):
    return _polar_residual_loop(
        np.ascontiguousarray(u), fh, fn, float(dr), float(dth), float(cap), mp,
        np.ascontiguousarray(rp), np.ascontiguousarray(phi), cos_t, sin_t,
    )


def _node_index(i, j, m):
    i = np.asarray(i)
    return np.where(i == 0, 0, 1 + (i - 1) * m + np.mod(j, m))


def polar_jacobian_numpy(u, fh, fn, dr, dth, cap, mp, rp, rpp, cos_t, sin_t):
    """COO triplets (rows, cols, vals) of the residual Jacobian; duplicates add."""
    n_rows, m = u.shape
    nr = n_rows - 1
    rows, cols, vals = [], [], []

    def add(r, c, v):
        r, c, v = np.broadcast_arrays(r, c, v)
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel().astype(float))

    jj = np.arange(m)
    up = np.roll(u, -1, axis=1)
    um = np.roll(u, 1, axis=1)

    # radial faces
    ii = np.arange(nr)[:, None]
    p = (u[1:] - u[:-1]) / dr
    q = (up[:-1] - um[:-1] + up[1:] - um[1:]) / (4.0 * dth * fh[:, None])
    w3 = (1.0 + p * p + q * q) ** 1.5
    a = fh[:, None] * dth * (1.0 + q * q) / w3
    b = -fh[:, None] * dth * p * q / w3
    bq = b / (4.0 * dth * fh[:, None])
    dep = [
        (ii + 1, jj, a / dr),
        (ii, jj, -a / dr),
        (ii, jj + 1, bq),
        (ii, jj - 1, -bq),
        (ii + 1, jj + 1, bq),
        (ii + 1, jj - 1, -bq),
    ]
    # face i+1/2 enters row i with +1/vol_i (origin: +1/cap) and row i+1 with -1/vol_{i+1}
    scale_lo = np.where(np.arange(nr) == 0, 1.0 / cap, 1.0 / (np.maximum(fn[:nr], 1e-300) * dr * dth))[:, None]
    hi_valid = (np.arange(nr) + 1 <= nr - 1)[:, None]
    scale_hi = np.where(hi_valid, -1.0 / (fn[1 : nr + 1, None] * dr * dth), 0.0)
    row_lo = _node_index(ii, jj, m)
    row_hi = _node_index(ii + 1, jj, m)
    for ci, cj, dv in dep:
        col = _node_index(ci * np.ones_like(jj), cj * np.ones_like(ii), m)
        add(row_lo, col, dv * scale_lo)
        mask = np.broadcast_to(hi_valid, dv.shape)
        add(row_hi[mask], col[mask], (dv * scale_hi)[mask])

    if nr >= 2:
        # angular faces, i = 1..N-1
        ia = np.arange(1, nr)[:, None]
        fi = fn[1:nr, None]
        qt = (up[1:nr] - u[1:nr]) / (fi * dth)
        pa = (u[2:] - u[:-2] + np.roll(u[2:], -1, axis=1) - np.roll(u[:-2], -1, axis=1)) / (4.0 * dr)
        w3 = (1.0 + pa * pa + qt * qt) ** 1.5
        c = dr * (1.0 + pa * pa) / w3
        d = -dr * pa * qt / w3
        cq = c / (fi * dth)
        dp = d / (4.0 * dr)
        dep = [
            (ia, jj + 1, cq),
            (ia, jj, -cq),
            (ia + 1, jj, dp),
            (ia + 1, jj + 1, dp),
            (ia - 1, jj, -dp),
            (ia - 1, jj + 1, -dp),
        ]
        vol = fi * dr * dth
        row_a = _node_index(ia, jj, m)
        row_b = _node_index(ia, jj + 1, m)
        for ci, cj, dv in dep:
            col = _node_index(ci * np.ones_like(jj), cj * np.ones_like(ia), m)
            add(row_a, col, dv / vol)
            add(row_b, col, -dv / vol)

        # drift term -rhs at interior nodes
        pc = (u[2:] - u[:-2]) / (2.0 * dr)
        qc = (up[1:nr] - um[1:nr]) / (2.0 * dth * fi)
        wc = np.sqrt(1.0 + pc * pc + qc * qc)
        num = mp[1:nr, None] * pc - rp[1:nr]
        dpc = mp[1:nr, None] / wc - num * pc / wc**3
        dqc = -num * qc / wc**3
        du = -rpp[1:nr] / wc
        dep = [
            (ia + 1, jj, -dpc / (2.0 * dr)),
            (ia - 1, jj, dpc / (2.0 * dr)),
            (ia, jj + 1, -dqc / (2.0 * dth * fi)),
            (ia, jj - 1, dqc / (2.0 * dth * fi)),
            (ia, jj, -du),
        ]
        for ci, cj, dv in dep:
            col = _node_index(ci * np.ones_like(jj), cj * np.ones_like(ia), m)
            add(row_a, col, dv)

    # origin drift term
    gx = 2.0 * np.dot(u[1], cos_t) / (m * dr)
    gy = 2.0 * np.dot(u[1], sin_t) / (m * dr)
    w0 = math.sqrt(1.0 + gx * gx + gy * gy)
    add(np.zeros(1, dtype=int), np.zeros(1, dtype=int), np.array([rpp[0, 0] / w0]))
    coef = -rp[0, 0] / w0**3 * 2.0 / (m * dr)
    add(np.zeros(m, dtype=int), _node_index(np.ones(m, dtype=int), jj, m), coef * (gx * cos_t + gy * sin_t))

    # Dirichlet rows
    bidx = _node_index(np.full(m, nr), jj, m)
    add(bidx, bidx, np.ones(m))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


@njit
def _idx(i, j, m):
    if i == 0:
        return 0
    return 1 + (i - 1) * m + (j % m)


@njit
def _polar_jacobian_loop(u, fh, fn, dr, dth, cap, mp, rp, rpp, cos_t, sin_t):
    n_rows, m = u.shape
    nr = n_rows - 1
    cap_est = 12 * nr * m + 12 * m * nr + 5 * nr * m + 2 * m + 2
    rows = np.empty(cap_est, dtype=np.int64)
    cols = np.empty(cap_est, dtype=np.int64)
    vals = np.empty(cap_est)
    k = 0
    ci = np.empty(6, dtype=np.int64)
    cj = np.empty(6, dtype=np.int64)
    dv = np.empty(6)
    for i in range(nr):
        for j in range(m):
            jp = j + 1
            jm = j - 1
            p = (u[i + 1, j] - u[i, j]) / dr
            q = (u[i, jp % m] - u[i, jm % m] + u[i + 1, jp % m] - u[i + 1, jm % m]) / (4.0 * dth * fh[i])
            w3 = (1.0 + p * p + q * q) ** 1.5
            a = fh[i] * dth * (1.0 + q * q) / w3
            b = -fh[i] * dth * p * q / w3
            bq = b / (4.0 * dth * fh[i])
            ci[0], cj[0], dv[0] = i + 1, j, a / dr
            ci[1], cj[1], dv[1] = i, j, -a / dr
            ci[2], cj[2], dv[2] = i, jp, bq
            ci[3], cj[3], dv[3] = i, jm, -bq
            ci[4], cj[4], dv[4] = i + 1, jp, bq
            ci[5], cj[5], dv[5] = i + 1, jm, -bq
            if i == 0:
                s_lo = 1.0 / cap
            else:
                s_lo = 1.0 / (fn[i] * dr * dth)
            r_lo = _idx(i, j, m)
            hi = i + 1 <= nr - 1
            r_hi = _idx(i + 1, j, m)
            s_hi = 0.0
            if hi:
                s_hi = -1.0 / (fn[i + 1] * dr * dth)
            for t in range(6):
                col = _idx(ci[t], cj[t], m)
                rows[k] = r_lo
                cols[k] = col
                vals[k] = dv[t] * s_lo
                k += 1
                if hi:
                    rows[k] = r_hi
                    cols[k] = col
                    vals[k] = dv[t] * s_hi
                    k += 1
    for i in range(1, nr):
        vol = fn[i] * dr * dth
        for j in range(m):
            jp = j + 1
            jm = j - 1
            qt = (u[i, jp % m] - u[i, j]) / (fn[i] * dth)
            pa = (u[i + 1, j] - u[i - 1, j] + u[i + 1, jp % m] - u[i - 1, jp % m]) / (4.0 * dr)
            w3 = (1.0 + pa * pa + qt * qt) ** 1.5
            c = dr * (1.0 + pa * pa) / w3
            d = -dr * pa * qt / w3
            cq = c / (fn[i] * dth)
            dp = d / (4.0 * dr)
            ci[0], cj[0], dv[0] = i, jp, cq
            ci[1], cj[1], dv[1] = i, j, -cq
            ci[2], cj[2], dv[2] = i + 1, j, dp
            ci[3], cj[3], dv[3] = i + 1, jp, dp
            ci[4], cj[4], dv[4] = i - 1, j, -dp
            ci[5], cj[5], dv[5] = i - 1, jp, -dp
            r_a = _idx(i, j, m)
            r_b = _idx(i, jp, m)
            for t in range(6):
                col = _idx(ci[t], cj[t], m)
                rows[k] = r_a
                cols[k] = col
                vals[k] = dv[t] / vol
                k += 1
                rows[k] = r_b
                cols[k] = col
                vals[k] = -dv[t] / vol
                k += 1
            pc = (u[i + 1, j] - u[i - 1, j]) / (2.0 * dr)
            qc = (u[i, jp % m] - u[i, jm % m]) / (2.0 * dth * fn[i])
            wc = math.sqrt(1.0 + pc * pc + qc * qc)
            num = mp[i] * pc - rp[i, j]
            dpc = mp[i] / wc - num * pc / wc**3
            dqc = -num * qc / wc**3
            ci[0], cj[0], dv[0] = i + 1, j, -dpc / (2.0 * dr)
            ci[1], cj[1], dv[1] = i - 1, j, dpc / (2.0 * dr)
            ci[2], cj[2], dv[2] = i, jp, -dqc / (2.0 * dth * fn[i])
            ci[3], cj[3], dv[3] = i, jm, dqc / (2.0 * dth * fn[i])
            ci[4], cj[4], dv[4] = i, j, rpp[i, j] / wc
            for t in range(5):
                rows[k] = r_a
                cols[k] = _idx(ci[t], cj[t], m)
                vals[k] = dv[t]
                k += 1
    gx = 0.0
    gy = 0.0
    for j in range(m):
        gx += u[1, j] * cos_t[j]
        gy += u[1, j] * sin_t[j]
    gx *= 2.0 / (m * dr)
    gy *= 2.0 / (m * dr)
    w0 = math.sqrt(1.0 + gx * gx + gy * gy)
    rows[k] = 0
    cols[k] = 0
    vals[k] = rpp[0, 0] / w0
    k += 1
    coef = -rp[0, 0] / w0**3 * 2.0 / (m * dr)
    for j in range(m):
        rows[k] = 0
        cols[k] = _idx(1, j, m)
        vals[k] = coef * (gx * cos_t[j] + gy * sin_t[j])
        k += 1
    for j in range(m):
        b = _idx(nr, j, m)
        rows[k] = b
        cols[k] = b
        vals[k] = 1.0
        k += 1
    return rows[:k], cols[:k], vals[:k]


def polar_jacobian_numba(u, fh, fn, dr, dth, cap, mp, rp, rpp, cos_t, sin_t):
    return _polar_jacobian_loop(
        np.ascontiguousarray(u), fh, fn, float(dr), float(dth), float(cap), mp,
        np.ascontiguousarray(rp), np.ascontiguousarray(rpp), cos_t, sin_t,
    )


if BACKEND == "numba":
    jacobi_scan = jacobi_scan_numba
    polar_residual = polar_residual_numba
    polar_jacobian = polar_jacobian_numba
else:
    jacobi_scan = jacobi_scan_numpy
    polar_residual = polar_residual_numpy
    polar_jacobian = polar_jacobian_numpy
