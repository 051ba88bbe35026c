"""Compiled cell quadrature of cutoff-weighted integrals of a multilinear interpolant.

Cells away from the cutoff transition band use their center only, where the
interpolant gradient is superconvergent. Cells that meet the band t in
[1/2, 1] are split into q^d sub-cells, each integrated at its own center with
the interpolant value and the recovered gradient (multilinear interpolation of
cell-center gradients, one-sided across the thin plane). The plain interpolant
gradient at off-center points is only first order and biases the energy terms.
"""

import numba
import numpy as np

LO, A, B, HI, L = 0.5, 0.625, 0.875, 1.0, 0.125


@numba.njit(cache=True, inline="always")
def _horner(c, s):
    acc = 0.0
    for k in range(c.size - 1, -1, -1):
        acc = acc * s + c[k]
    return acc


@numba.njit(cache=True)
def _phi(t, P):
    if t <= LO:
        return 1.0
    if t < A:
        return _horner(P, (t - LO) / L)
    if t <= B:
        return 2.0 * (1.0 - t)
    if t < HI:
        return 1.0 - _horner(P, 1.0 - (t - B) / L)
    return 0.0


@numba.njit(cache=True)
def _dphi(t, P1):
    if t <= LO or t >= HI:
        return 0.0
    if t < A:
        return _horner(P1, (t - LO) / L) / L
    if t <= B:
        return -2.0
    return _horner(P1, 1.0 - (t - B) / L) / L


@numba.njit(cache=True, inline="always")
def _lower(t, nc, k, last, p):
    i = int(np.floor(t))
    if i < 0:
        i = 0
    if i > nc - 2:
        i = nc - 2
    if last:
        if k >= p:
            if i < p:
                i = p
        elif i > p - 2:
            i = p - 2
    return i


@numba.njit(cache=True)
def _recovered_2d(cg, i, j, s, e, p, g):
    nx, ny = cg.shape[0], cg.shape[1]
    tx = i + s - 0.5
    ty = j + e - 0.5
    i0 = _lower(tx, nx, i, False, p)
    j0 = _lower(ty, ny, j, True, p)
    fx = tx - i0
    fy = ty - j0
    for k in range(2):
        g[k] = ((1 - fx) * (1 - fy) * cg[i0, j0, k] + fx * (1 - fy) * cg[i0 + 1, j0, k]
                + (1 - fx) * fy * cg[i0, j0 + 1, k] + fx * fy * cg[i0 + 1, j0 + 1, k])


@numba.njit(cache=True)
def _recovered_3d(cg, i, j, l, s, e, o, p, g):
    tx = i + s - 0.5
    ty = j + e - 0.5
    tz = l + o - 0.5
    i0 = _lower(tx, cg.shape[0], i, False, p)
    j0 = _lower(ty, cg.shape[1], j, False, p)
    k0 = _lower(tz, cg.shape[2], l, True, p)
    fx = tx - i0
    fy = ty - j0
    fz = tz - k0
    for c in range(3):
        acc = 0.0
        for a in range(2):
            wa = fx if a else 1 - fx
            for b in range(2):
                wb = fy if b else 1 - fy
                for q in range(2):
                    wq = fz if q else 1 - fz
                    acc += wa * wb * wq * cg[i0 + a, j0 + b, k0 + q, c]
        g[c] = acc


@numba.njit(cache=True)
def _accumulate(val, g, y, c, T, M, r, P, P1, w, wD, out):
    d = y.size
    z = np.zeros(d)
    v = np.zeros(d)
    for i in range(d):
        v[i] = y[i] - c[i]
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += T[i, j] * v[j]
        z[i] = acc
    dist = 0.0
    for i in range(d):
        dist += z[i] * z[i]
    dist = np.sqrt(dist)
    t = dist / r
    if t >= 1.0:
        return
    gMg = 0.0
    for i in range(d):
        for j in range(d):
            gMg += g[i] * M[i, j] * g[j]
    ph = _phi(t, P)
    out[1] += wD * ph * gMg
    if t <= LO or w == 0.0:
        return
    dp = -_dphi(t, P1) * w
    # radial direction in the original frame
    vn = 0.0
    for i in range(d):
        vn += v[i] * v[i]
    vn = np.sqrt(vn)
    rad = 0.0
    for i in range(d):
        rad += g[i] * v[i]
    rad /= vn
    out[0] += dp * val * val / dist
    out[2] += dp * val * rad
    out[3] += dp * dist * rad * rad
    out[4] += dp * dist * gMg


@numba.njit(cache=True)
def integrals_2d(u, cg, p, hx, hy, lo, hi, c, T, M, r, P, P1, q, tnorm):
    """Returns [H, D, G*r, E*r^2, D'*r^2] before the 1/r factors."""
    out = np.zeros(5)
    y = np.zeros(2)
    g = np.zeros(2)
    half = 0.5 * np.sqrt(hx * hx + hy * hy) * tnorm / r
    vol = hx * hy
    for i in range(lo[0], hi[0]):
        for j in range(lo[1], hi[1]):
            u00 = u[i, j]
            u10 = u[i + 1, j]
            u01 = u[i, j + 1]
            u11 = u[i + 1, j + 1]
            x0 = -1.0 + i * hx
            y0 = -1.0 + j * hy
            # cell-center distance in t units
            cx = x0 + 0.5 * hx - c[0]
            cy = y0 + 0.5 * hy - c[1]
            zx = T[0, 0] * cx + T[0, 1] * cy
            zy = T[1, 0] * cx + T[1, 1] * cy
            tc = np.sqrt(zx * zx + zy * zy) / r
            if tc - half >= 1.0:
                continue
            split = tc + half > LO
            m = q if split else 1
            w = vol / (m * m)
            for a in range(m):
                s = (a + 0.5) / m
                for b in range(m):
                    e = (b + 0.5) / m
                    val = ((1 - s) * (1 - e) * u00 + s * (1 - e) * u10
                           + (1 - s) * e * u01 + s * e * u11)
                    if split:
                        _recovered_2d(cg, i, j, s, e, p, g)
                    else:
                        g[0] = cg[i, j, 0]
                        g[1] = cg[i, j, 1]
                    y[0] = x0 + s * hx
                    y[1] = y0 + e * hy
                    _accumulate(val, g, y, c, T, M, r, P, P1, w, 0.0 if split else w, out)
            if split:
                # the energy term keeps the superconvergent center rule
                g[0] = cg[i, j, 0]
                g[1] = cg[i, j, 1]
                y[0] = x0 + 0.5 * hx
                y[1] = y0 + 0.5 * hy
                _accumulate(0.0, g, y, c, T, M, r, P, P1, 0.0, vol, out)
    return out


@numba.njit(cache=True)
def integrals_3d(u, cg, p, hx, hy, hz, lo, hi, c, T, M, r, P, P1, q, tnorm):
    out = np.zeros(5)
    y = np.zeros(3)
    g = np.zeros(3)
    cv = np.zeros(3)
    half = 0.5 * np.sqrt(hx * hx + hy * hy + hz * hz) * tnorm / r
    vol = hx * hy * hz
    for i in range(lo[0], hi[0]):
        for j in range(lo[1], hi[1]):
            for k in range(lo[2], hi[2]):
                c000 = u[i, j, k]
                c100 = u[i + 1, j, k]
                c010 = u[i, j + 1, k]
                c110 = u[i + 1, j + 1, k]
                c001 = u[i, j, k + 1]
                c101 = u[i + 1, j, k + 1]
                c011 = u[i, j + 1, k + 1]
                c111 = u[i + 1, j + 1, k + 1]
                x0 = -1.0 + i * hx
                y0 = -1.0 + j * hy
                z0 = -1.0 + k * hz
                cv[0] = x0 + 0.5 * hx - c[0]
                cv[1] = y0 + 0.5 * hy - c[1]
                cv[2] = z0 + 0.5 * hz - c[2]
                tc = 0.0
                for ax in range(3):
                    acc = 0.0
                    for qq in range(3):
                        acc += T[ax, qq] * cv[qq]
                    tc += acc * acc
                tc = np.sqrt(tc) / r
                if tc - half >= 1.0:
                    continue
                split = tc + half > LO
                m = q if split else 1
                w = vol / (m * m * m)
                for a in range(m):
                    s = (a + 0.5) / m
                    for b in range(m):
                        e = (b + 0.5) / m
                        for f in range(m):
                            o = (f + 0.5) / m
                            # interpolate along x, then y, then z
                            a00 = c000 + s * (c100 - c000)
                            a10 = c010 + s * (c110 - c010)
                            a01 = c001 + s * (c101 - c001)
                            a11 = c011 + s * (c111 - c011)
                            b0 = a00 + e * (a10 - a00)
                            b1 = a01 + e * (a11 - a01)
                            val = b0 + o * (b1 - b0)
                            if split:
                                _recovered_3d(cg, i, j, k, s, e, o, p, g)
                            else:
                                g[0] = cg[i, j, k, 0]
                                g[1] = cg[i, j, k, 1]
                                g[2] = cg[i, j, k, 2]
                            y[0] = x0 + s * hx
                            y[1] = y0 + e * hy
                            y[2] = z0 + o * hz
                            _accumulate(val, g, y, c, T, M, r, P, P1, w, 0.0 if split else w, out)
                if split:
                    # the energy term keeps the superconvergent center rule
                    g[0] = cg[i, j, k, 0]
                    g[1] = cg[i, j, k, 1]
                    g[2] = cg[i, j, k, 2]
                    y[0] = x0 + 0.5 * hx
                    y[1] = y0 + 0.5 * hy
                    y[2] = z0 + 0.5 * hz
                    _accumulate(0.0, g, y, c, T, M, r, P, P1, 0.0, vol, out)
    return out


def cutoff_coeffs(blend: str):
    if blend == "quintic":
        P = np.array([1.0, 0.0, 0.0, -1.5, 2.0, -0.75])
    elif blend == "cubic":
        P = np.array([1.0, 0.0, -0.5, 0.25])
    else:
        raise ValueError(f"unknown blend {blend!r}")
    P1 = np.array([k * P[k] for k in range(1, P.size)])
    return P, P1
