"""Numba kernels for the transported gain/loss/frequency sweeps (d = 2).

Layout convention: a time slice of a transported density f^# is passed as a
C-contiguous array S[iv1, iv2, ix1, ix2] (velocity-major, space contiguous).
Each factor evaluation is multilinear in v (post-collisional velocities fall
off the grid) times bilinear in x (transported positions x + t(v - v*));
anything outside the truncated box contributes zero.  Both quadrature
backends feed the same kernels; only the node/weight arrays differ, so for
frozen nodes every sweep is a monotone multilinear functional of its inputs.
"""

import numpy as np
from numba import njit, prange

_EDGE = 1e-12


@njit(cache=True, inline="always")
def _v_stencil(c, n):
    """Index/fraction for linear interp at fractional coordinate c in [0, n-1]."""
    if c < -1e-9 or c > n - 1 + 1e-9:
        return -1, 0.0
    if c < 0.0:
        c = 0.0
    i = int(c)
    if i >= n - 1:
        i = n - 2
    return i, c - i


@njit(cache=True, inline="always")
def _x_shift_stencil(s, hx, n):
    """Stencil for sampling at x_i + s: valid index range, offsets, fraction."""
    sh = s / hx
    k = int(np.floor(sh))
    f = sh - k
    if f < _EDGE:
        f = 0.0
        kb = k
    elif f > 1.0 - _EDGE:
        f = 0.0
        k += 1
        kb = k
    else:
        kb = k + 1
    lo = -k if -k > 0 else 0
    hi = n - 1 - kb
    if n - 1 - k < hi:
        hi = n - 1 - k
    return lo, hi, k, kb, f


@njit(cache=True, inline="always")
def _bilin_x(S, a, b, j1, j1b, f1, j2, j2b, f2):
    lo = (1.0 - f2) * S[a, b, j1, j2] + f2 * S[a, b, j1, j2b]
    hi = (1.0 - f2) * S[a, b, j1b, j2] + f2 * S[a, b, j1b, j2b]
    return (1.0 - f1) * lo + f1 * hi


@njit(cache=True, inline="always")
def _factor(S, i1, g1, i2, g2, j1, j1b, f1, j2, j2b, f2):
    """Multilinear factor value: v-mix of four bilinear x-interps."""
    c00 = _bilin_x(S, i1, i2, j1, j1b, f1, j2, j2b, f2)
    c01 = _bilin_x(S, i1, i2 + 1, j1, j1b, f1, j2, j2b, f2)
    c10 = _bilin_x(S, i1 + 1, i2, j1, j1b, f1, j2, j2b, f2)
    c11 = _bilin_x(S, i1 + 1, i2 + 1, j1, j1b, f1, j2, j2b, f2)
    return ((1.0 - g1) * ((1.0 - g2) * c00 + g2 * c01)
            + g1 * ((1.0 - g2) * c10 + g2 * c11))


@njit(cache=True, inline="always")
def _point_factor(S, va, vb, px, py, x0, hx, nx, v0, hv, nv):
    """Slice value at velocity (va, vb) and position (px, py); 0 outside."""
    i1, g1 = _v_stencil((va - v0) / hv, nv)
    if i1 < 0:
        return 0.0
    i2, g2 = _v_stencil((vb - v0) / hv, nv)
    if i2 < 0:
        return 0.0
    c1 = (px - x0) / hx
    if c1 < 0.0 or c1 > nx - 1:
        return 0.0
    c2 = (py - x0) / hx
    if c2 < 0.0 or c2 > nx - 1:
        return 0.0
    j1 = int(c1)
    if j1 >= nx - 1:
        j1 = nx - 2
    f1 = c1 - j1
    j2 = int(c2)
    if j2 >= nx - 1:
        j2 = nx - 2
    f2 = c2 - j2
    return _factor(S, i1, g1, i2, g2, j1, j1 + 1, f1, j2, j2 + 1, f2)


@njit(cache=True, inline="always")
def _b2_table(z, z0, dz, vals):
    c = (z - z0) / dz
    if c < 0.0:
        c = 0.0
    i = int(c)
    if i >= vals.size - 1:
        i = vals.size - 2
    f = c - i
    return (1.0 - f) * vals[i] + f * vals[i + 1]


@njit(cache=True, inline="always")
def _b3_table(z, w, z0, dz, w0, dw, vals):
    nz = vals.shape[0]
    nw = vals.shape[1]
    cz = (z - z0) / dz
    if cz < 0.0:
        cz = 0.0
    iz = int(cz)
    if iz >= nz - 1:
        iz = nz - 2
    fz = cz - iz
    cw = (w - w0) / dw
    if cw < 0.0:
        cw = 0.0
    iw = int(cw)
    if iw >= nw - 1:
        iw = nw - 2
    fw = cw - iw
    return ((1.0 - fz) * ((1.0 - fw) * vals[iz, iw] + fw * vals[iz, iw + 1])
            + fz * ((1.0 - fw) * vals[iz + 1, iw] + fw * vals[iz + 1, iw + 1]))


@njit(cache=True, inline="always")
def _a3_lookup(r1, r2, dr, table):
    n = table.shape[0]
    c1 = r1 / dr
    c2 = r2 / dr
    if c1 < 0.0:
        c1 = 0.0
    if c2 < 0.0:
        c2 = 0.0
    i1 = int(c1)
    i2 = int(c2)
    if i1 >= n - 1:
        i1 = n - 2
    if i2 >= n - 1:
        i2 = n - 2
    f1 = c1 - i1
    f2 = c2 - i2
    return ((1.0 - f1) * ((1.0 - f2) * table[i1, i2] + f2 * table[i1, i2 + 1])
            + f1 * ((1.0 - f2) * table[i1 + 1, i2] + f2 * table[i1 + 1, i2 + 1]))


@njit(cache=True, inline="always")
def _binary_angular(uh1, uh2, on, ow, bz0, bdz, bvals):
    """Resolved angular factor sum_k w_k b2(u^ . omega_k)."""
    acc = 0.0
    for k in range(on.shape[0]):
        acc += ow[k] * _b2_table(uh1 * on[k, 0] + uh2 * on[k, 1], bz0, bdz, bvals)
    return acc


@njit(cache=True, inline="always")
def _ternary_angular(n11, n12, n21, n22, on, ow, bz0, bdz, bw0, bdw, bvals):
    """Resolved angular factor sum_k w_k b3(u- . omega_k, omega1.omega2)."""
    acc = 0.0
    for k in range(on.shape[0]):
        z = n11 * on[k, 0] + n12 * on[k, 1] + n21 * on[k, 2] + n22 * on[k, 3]
        wdot = on[k, 0] * on[k, 2] + on[k, 1] * on[k, 3]
        acc += ow[k] * _b3_table(z, wdot, bz0, bdz, bw0, bdw, bvals)
    return acc


# ---------------------------------------------------------------------------
# grid sweeps


@njit(cache=True, fastmath=True, parallel=True)
def r2_sweep(G, t, x0, hx, nx, v0, hv, nv, vn, vw, gamma2,
             ang_norm, on, ow, bz0, bdz, bvals, resolve, out):
    """R2^# on the (x, v) grid at time t.

    ``resolve`` false: angular integral collapsed to the norm ``ang_norm``.
    ``resolve`` true: explicit omega sum with the b2 table (used when the
    loss must share its angular rule with the gain).
    """
    for io in prange(nv * nv):
        o1 = io // nv
        o2 = io % nv
        vo1 = v0 + o1 * hv
        vo2 = v0 + o2 * hv
        for m in range(vn.shape[0]):
            w1 = vn[m, 0]
            w2 = vn[m, 1]
            du1 = w1 - vo1
            du2 = w2 - vo2
            umag = np.sqrt(du1 * du1 + du2 * du2)
            if umag < 1e-14:
                continue
            if resolve:
                ang = _binary_angular(du1 / umag, du2 / umag, on, ow, bz0, bdz, bvals)
            else:
                ang = ang_norm
            if ang == 0.0:
                continue
            wgt = vw[m] * ang * umag ** gamma2
            i1, g1 = _v_stencil((w1 - v0) / hv, nv)
            if i1 < 0:
                continue
            i2, g2 = _v_stencil((w2 - v0) / hv, nv)
            if i2 < 0:
                continue
            lo1, hi1, k1, k1b, f1 = _x_shift_stencil(-t * du1, hx, nx)
            if lo1 > hi1:
                continue
            lo2, hi2, k2, k2b, f2 = _x_shift_stencil(-t * du2, hx, nx)
            if lo2 > hi2:
                continue
            for y1 in range(lo1, hi1 + 1):
                j1 = y1 + k1
                j1b = y1 + k1b
                for y2 in range(lo2, hi2 + 1):
                    out[o1, o2, y1, y2] += wgt * _factor(
                        G, i1, g1, i2, g2, j1, j1b, f1, y2 + k2, y2 + k2b, f2)


@njit(cache=True, fastmath=True, parallel=True)
def g2_sweep(F, G, t, x0, hx, nx, v0, hv, nv, vn, vw, on, ow,
             gamma2, bz0, bdz, bvals, out):
    """G2^# on the (x, v) grid at time t."""
    for io in prange(nv * nv):
        o1 = io // nv
        o2 = io % nv
        vo1 = v0 + o1 * hv
        vo2 = v0 + o2 * hv
        for m in range(vn.shape[0]):
            w1 = vn[m, 0]
            w2 = vn[m, 1]
            du1 = w1 - vo1
            du2 = w2 - vo2
            umag = np.sqrt(du1 * du1 + du2 * du2)
            if umag < 1e-14:
                continue
            base = vw[m] * umag ** gamma2
            uh1 = du1 / umag
            uh2 = du2 / umag
            for k in range(on.shape[0]):
                om1 = on[k, 0]
                om2 = on[k, 1]
                b2v = _b2_table(uh1 * om1 + uh2 * om2, bz0, bdz, bvals)
                if b2v == 0.0:
                    continue
                wgt = base * ow[k] * b2v
                dot = om1 * du1 + om2 * du2
                vp1 = vo1 + dot * om1
                vp2 = vo2 + dot * om2
                q1 = w1 - dot * om1
                q2 = w2 - dot * om2
                ia1, ga1 = _v_stencil((vp1 - v0) / hv, nv)
                if ia1 < 0:
                    continue
                ia2, ga2 = _v_stencil((vp2 - v0) / hv, nv)
                if ia2 < 0:
                    continue
                ib1, gb1 = _v_stencil((q1 - v0) / hv, nv)
                if ib1 < 0:
                    continue
                ib2, gb2 = _v_stencil((q2 - v0) / hv, nv)
                if ib2 < 0:
                    continue
                alo1, ahi1, ak1, ak1b, af1 = _x_shift_stencil(t * (vo1 - vp1), hx, nx)
                alo2, ahi2, ak2, ak2b, af2 = _x_shift_stencil(t * (vo2 - vp2), hx, nx)
                blo1, bhi1, bk1, bk1b, bf1 = _x_shift_stencil(t * (vo1 - q1), hx, nx)
                blo2, bhi2, bk2, bk2b, bf2 = _x_shift_stencil(t * (vo2 - q2), hx, nx)
                lo1 = max(alo1, blo1)
                hi1 = min(ahi1, bhi1)
                lo2 = max(alo2, blo2)
                hi2 = min(ahi2, bhi2)
                if lo1 > hi1 or lo2 > hi2:
                    continue
                for y1 in range(lo1, hi1 + 1):
                    for y2 in range(lo2, hi2 + 1):
                        fa = _factor(F, ia1, ga1, ia2, ga2,
                                     y1 + ak1, y1 + ak1b, af1, y2 + ak2, y2 + ak2b, af2)
                        fb = _factor(G, ib1, gb1, ib2, gb2,
                                     y1 + bk1, y1 + bk1b, bf1, y2 + bk2, y2 + bk2b, bf2)
                        out[o1, o2, y1, y2] += wgt * fa * fb


@njit(cache=True, fastmath=True, parallel=True)
def r3_sweep(G, H, t, x0, hx, nx, v0, hv, nv, vvn, vvw, gamma3,
             a3_dr, a3_table, on, ow, bz0, bdz, bw0, bdw, bvals, resolve, out):
    """R3^# on the (x, v) grid at time t.

    Angular part from the ellipsoid-invariant table (fast path) or an
    explicit omega sum sharing the gain's rule (``resolve`` true).
    """
    for io in prange(nv * nv):
        o1 = io // nv
        o2 = io % nv
        vo1 = v0 + o1 * hv
        vo2 = v0 + o2 * hv
        for m in range(vvn.shape[0]):
            a1 = vvn[m, 0]
            a2 = vvn[m, 1]
            b1 = vvn[m, 2]
            b2 = vvn[m, 3]
            u11 = a1 - vo1
            u12 = a2 - vo2
            u21 = b1 - vo1
            u22 = b2 - vo2
            e1 = a1 - b1
            e2 = a2 - b2
            ut2 = u11 * u11 + u12 * u12 + u21 * u21 + u22 * u22 + e1 * e1 + e2 * e2
            if ut2 < 1e-28:
                continue
            ut = np.sqrt(ut2)
            if resolve:
                ang = _ternary_angular(u11 / ut, u12 / ut, u21 / ut, u22 / ut,
                                       on, ow, bz0, bdz, bw0, bdw, bvals)
            else:
                r1 = np.sqrt(u11 * u11 + u12 * u12) / ut
                r2 = np.sqrt(u21 * u21 + u22 * u22) / ut
                ang = _a3_lookup(r1, r2, a3_dr, a3_table)
            if ang == 0.0:
                continue
            wgt = vvw[m] * ang * ut ** gamma3
            ia1, ga1 = _v_stencil((a1 - v0) / hv, nv)
            if ia1 < 0:
                continue
            ia2, ga2 = _v_stencil((a2 - v0) / hv, nv)
            if ia2 < 0:
                continue
            ib1, gb1 = _v_stencil((b1 - v0) / hv, nv)
            if ib1 < 0:
                continue
            ib2, gb2 = _v_stencil((b2 - v0) / hv, nv)
            if ib2 < 0:
                continue
            alo1, ahi1, ak1, ak1b, af1 = _x_shift_stencil(-t * u11, hx, nx)
            alo2, ahi2, ak2, ak2b, af2 = _x_shift_stencil(-t * u12, hx, nx)
            blo1, bhi1, bk1, bk1b, bf1 = _x_shift_stencil(-t * u21, hx, nx)
            blo2, bhi2, bk2, bk2b, bf2 = _x_shift_stencil(-t * u22, hx, nx)
            lo1 = max(alo1, blo1)
            hi1 = min(ahi1, bhi1)
            lo2 = max(alo2, blo2)
            hi2 = min(ahi2, bhi2)
            if lo1 > hi1 or lo2 > hi2:
                continue
            for y1 in range(lo1, hi1 + 1):
                for y2 in range(lo2, hi2 + 1):
                    fa = _factor(G, ia1, ga1, ia2, ga2,
                                 y1 + ak1, y1 + ak1b, af1, y2 + ak2, y2 + ak2b, af2)
                    fb = _factor(H, ib1, gb1, ib2, gb2,
                                 y1 + bk1, y1 + bk1b, bf1, y2 + bk2, y2 + bk2b, bf2)
                    out[o1, o2, y1, y2] += wgt * fa * fb


@njit(cache=True, fastmath=True, parallel=True)
def g3_sweep(F, G, H, t, x0, hx, nx, v0, hv, nv, vvn, vvw, on, ow,
             gamma3, bz0, bdz, bw0, bdw, bvals, out):
    """G3^# on the (x, v) grid at time t."""
    for io in prange(nv * nv):
        o1 = io // nv
        o2 = io % nv
        vo1 = v0 + o1 * hv
        vo2 = v0 + o2 * hv
        for m in range(vvn.shape[0]):
            a1 = vvn[m, 0]
            a2 = vvn[m, 1]
            b1 = vvn[m, 2]
            b2 = vvn[m, 3]
            u11 = a1 - vo1
            u12 = a2 - vo2
            u21 = b1 - vo1
            u22 = b2 - vo2
            e1 = a1 - b1
            e2 = a2 - b2
            ut2 = u11 * u11 + u12 * u12 + u21 * u21 + u22 * u22 + e1 * e1 + e2 * e2
            if ut2 < 1e-28:
                continue
            ut = np.sqrt(ut2)
            base = vvw[m] * ut ** gamma3
            n11 = u11 / ut
            n12 = u12 / ut
            n21 = u21 / ut
            n22 = u22 / ut
            for k in range(on.shape[0]):
                p1 = on[k, 0]
                p2 = on[k, 1]
                q1 = on[k, 2]
                q2 = on[k, 3]
                z = n11 * p1 + n12 * p2 + n21 * q1 + n22 * q2
                wdot = p1 * q1 + p2 * q2
                b3v = _b3_table(z, wdot, bz0, bdz, bw0, bdw, bvals)
                if b3v == 0.0:
                    continue
                wgt = base * ow[k] * b3v
                lam = (p1 * u11 + p2 * u12 + q1 * u21 + q2 * u22) / (1.0 + wdot)
                vs1 = vo1 + lam * (p1 + q1)
                vs2 = vo2 + lam * (p2 + q2)
                w11 = a1 - lam * p1
                w12 = a2 - lam * p2
                w21 = b1 - lam * q1
                w22 = b2 - lam * q2
                ia1, ga1 = _v_stencil((vs1 - v0) / hv, nv)
                if ia1 < 0:
                    continue
                ia2, ga2 = _v_stencil((vs2 - v0) / hv, nv)
                if ia2 < 0:
                    continue
                ib1, gb1 = _v_stencil((w11 - v0) / hv, nv)
                if ib1 < 0:
                    continue
                ib2, gb2 = _v_stencil((w12 - v0) / hv, nv)
                if ib2 < 0:
                    continue
                ic1, gc1 = _v_stencil((w21 - v0) / hv, nv)
                if ic1 < 0:
                    continue
                ic2, gc2 = _v_stencil((w22 - v0) / hv, nv)
                if ic2 < 0:
                    continue
                alo1, ahi1, ak1, ak1b, af1 = _x_shift_stencil(t * (vo1 - vs1), hx, nx)
                alo2, ahi2, ak2, ak2b, af2 = _x_shift_stencil(t * (vo2 - vs2), hx, nx)
                blo1, bhi1, bk1, bk1b, bf1 = _x_shift_stencil(t * (vo1 - w11), hx, nx)
                blo2, bhi2, bk2, bk2b, bf2 = _x_shift_stencil(t * (vo2 - w12), hx, nx)
                clo1, chi1, ck1, ck1b, cf1 = _x_shift_stencil(t * (vo1 - w21), hx, nx)
                clo2, chi2, ck2, ck2b, cf2 = _x_shift_stencil(t * (vo2 - w22), hx, nx)
                lo1 = max(alo1, blo1, clo1)
                hi1 = min(ahi1, bhi1, chi1)
                lo2 = max(alo2, blo2, clo2)
                hi2 = min(ahi2, bhi2, chi2)
                if lo1 > hi1 or lo2 > hi2:
                    continue
                for y1 in range(lo1, hi1 + 1):
                    for y2 in range(lo2, hi2 + 1):
                        fa = _factor(F, ia1, ga1, ia2, ga2,
                                     y1 + ak1, y1 + ak1b, af1, y2 + ak2, y2 + ak2b, af2)
                        fb = _factor(G, ib1, gb1, ib2, gb2,
                                     y1 + bk1, y1 + bk1b, bf1, y2 + bk2, y2 + bk2b, bf2)
                        fc = _factor(H, ic1, gc1, ic2, gc2,
                                     y1 + ck1, y1 + ck1b, cf1, y2 + ck2, y2 + ck2b, cf2)
                        out[o1, o2, y1, y2] += wgt * fa * fb * fc


# ---------------------------------------------------------------------------
# pointwise evaluations (certificate integrands)


@njit(cache=True, fastmath=True)
def r2_point(G, t, px, py, va, vb, x0, hx, nx, v0, hv, nv,
             vn, vw, gamma2, ang_norm):
    acc = 0.0
    for m in range(vn.shape[0]):
        w1 = vn[m, 0]
        w2 = vn[m, 1]
        du1 = w1 - va
        du2 = w2 - vb
        umag = np.sqrt(du1 * du1 + du2 * du2)
        if umag < 1e-14:
            continue
        val = _point_factor(G, w1, w2, px - t * du1, py - t * du2,
                            x0, hx, nx, v0, hv, nv)
        if val != 0.0:
            acc += vw[m] * ang_norm * umag ** gamma2 * val
    return acc


@njit(cache=True, fastmath=True)
def g2_point(F, G, t, px, py, va, vb, x0, hx, nx, v0, hv, nv,
             vn, vw, on, ow, gamma2, bz0, bdz, bvals):
    acc = 0.0
    for m in range(vn.shape[0]):
        w1 = vn[m, 0]
        w2 = vn[m, 1]
        du1 = w1 - va
        du2 = w2 - vb
        umag = np.sqrt(du1 * du1 + du2 * du2)
        if umag < 1e-14:
            continue
        base = vw[m] * umag ** gamma2
        uh1 = du1 / umag
        uh2 = du2 / umag
        for k in range(on.shape[0]):
            om1 = on[k, 0]
            om2 = on[k, 1]
            b2v = _b2_table(uh1 * om1 + uh2 * om2, bz0, bdz, bvals)
            if b2v == 0.0:
                continue
            dot = om1 * du1 + om2 * du2
            vp1 = va + dot * om1
            vp2 = vb + dot * om2
            q1 = w1 - dot * om1
            q2 = w2 - dot * om2
            fa = _point_factor(F, vp1, vp2, px + t * (va - vp1), py + t * (vb - vp2),
                               x0, hx, nx, v0, hv, nv)
            if fa == 0.0:
                continue
            fb = _point_factor(G, q1, q2, px + t * (va - q1), py + t * (vb - q2),
                               x0, hx, nx, v0, hv, nv)
            acc += base * ow[k] * b2v * fa * fb
    return acc


@njit(cache=True, fastmath=True)
def r3_point(G, H, t, px, py, va, vb, x0, hx, nx, v0, hv, nv,
             vvn, vvw, gamma3, a3_dr, a3_table):
    acc = 0.0
    for m in range(vvn.shape[0]):
        a1 = vvn[m, 0]
        a2 = vvn[m, 1]
        b1 = vvn[m, 2]
        b2 = vvn[m, 3]
        u11 = a1 - va
        u12 = a2 - vb
        u21 = b1 - va
        u22 = b2 - vb
        e1 = a1 - b1
        e2 = a2 - b2
        ut2 = u11 * u11 + u12 * u12 + u21 * u21 + u22 * u22 + e1 * e1 + e2 * e2
        if ut2 < 1e-28:
            continue
        ut = np.sqrt(ut2)
        r1 = np.sqrt(u11 * u11 + u12 * u12) / ut
        r2 = np.sqrt(u21 * u21 + u22 * u22) / ut
        ang = _a3_lookup(r1, r2, a3_dr, a3_table)
        if ang == 0.0:
            continue
        fa = _point_factor(G, a1, a2, px - t * u11, py - t * u12,
                           x0, hx, nx, v0, hv, nv)
        if fa == 0.0:
            continue
        fb = _point_factor(H, b1, b2, px - t * u21, py - t * u22,
                           x0, hx, nx, v0, hv, nv)
        acc += vvw[m] * ang * ut ** gamma3 * fa * fb
    return acc


@njit(cache=True, fastmath=True)
def g3_point(F, G, H, t, px, py, va, vb, x0, hx, nx, v0, hv, nv,
             vvn, vvw, on, ow, gamma3, bz0, bdz, bw0, bdw, bvals):
    acc = 0.0
    for m in range(vvn.shape[0]):
        a1 = vvn[m, 0]
        a2 = vvn[m, 1]
        b1 = vvn[m, 2]
        b2 = vvn[m, 3]
        u11 = a1 - va
        u12 = a2 - vb
        u21 = b1 - va
        u22 = b2 - vb
        e1 = a1 - b1
        e2 = a2 - b2
        ut2 = u11 * u11 + u12 * u12 + u21 * u21 + u22 * u22 + e1 * e1 + e2 * e2
        if ut2 < 1e-28:
            continue
        ut = np.sqrt(ut2)
        base = vvw[m] * ut ** gamma3
        n11 = u11 / ut
        n12 = u12 / ut
        n21 = u21 / ut
        n22 = u22 / ut
        for k in range(on.shape[0]):
            p1 = on[k, 0]
            p2 = on[k, 1]
            q1 = on[k, 2]
            q2 = on[k, 3]
            z = n11 * p1 + n12 * p2 + n21 * q1 + n22 * q2
            wdot = p1 * q1 + p2 * q2
            b3v = _b3_table(z, wdot, bz0, bdz, bw0, bdw, bvals)
            if b3v == 0.0:
                continue
            lam = (p1 * u11 + p2 * u12 + q1 * u21 + q2 * u22) / (1.0 + wdot)
            vs1 = va + lam * (p1 + q1)
            vs2 = vb + lam * (p2 + q2)
            w11 = a1 - lam * p1
            w12 = a2 - lam * p2
            w21 = b1 - lam * q1
            w22 = b2 - lam * q2
            fa = _point_factor(F, vs1, vs2, px + t * (va - vs1), py + t * (vb - vs2),
                               x0, hx, nx, v0, hv, nv)
            if fa == 0.0:
                continue
            fb = _point_factor(G, w11, w12, px + t * (va - w11), py + t * (vb - w12),
                               x0, hx, nx, v0, hv, nv)
            if fb == 0.0:
                continue
            fc = _point_factor(H, w21, w22, px + t * (va - w21), py + t * (vb - w22),
                               x0, hx, nx, v0, hv, nv)
            acc += base * ow[k] * b3v * fa * fb * fc
    return acc


@njit(cache=True, fastmath=True, parallel=True)
def a3_batch(nus, on, ow, bz0, bdz, bw0, bdw, bvals, out):
    """Angular integrals of b3 over S^3 for a batch of (nu1, nu2) pairs."""
    for p in prange(nus.shape[0]):
        acc = 0.0
        for k in range(on.shape[0]):
            z = (nus[p, 0] * on[k, 0] + nus[p, 1] * on[k, 1]
                 + nus[p, 2] * on[k, 2] + nus[p, 3] * on[k, 3])
            if z > 1.0:
                z = 1.0
            elif z < -1.0:
                z = -1.0
            wdot = on[k, 0] * on[k, 2] + on[k, 1] * on[k, 3]
            if wdot > 0.5:
                wdot = 0.5
            elif wdot < -0.5:
                wdot = -0.5
            acc += ow[k] * _b3_table(z, wdot, bz0, bdz, bw0, bdw, bvals)
        out[p] = acc
