"""numba implementations of the sampling kernels.

Layouts: detector images (n_rows, n_cols), line sinograms (n_mu, n_s),
volumes (nz, ny, nx).  All kernels are deterministic under any thread count:
parallel loops only ever write disjoint output elements, and the one scatter
kernel (radon2d_adjoint) accumulates into a fixed number of chunk buffers
that are reduced in a fixed order.
"""

import math

import numpy as np
from numba import njit, prange

_ADJOINT_CHUNKS = 8


@njit(cache=True, inline="always")
def _bilinear(img, fy, fx):
    ny, nx = img.shape
    y0 = int(math.floor(fy))
    x0 = int(math.floor(fx))
    wy = fy - y0
    wx = fx - x0
    val = 0.0
    if 0 <= y0 < ny:
        if 0 <= x0 < nx:
            val += img[y0, x0] * (1.0 - wy) * (1.0 - wx)
        if 0 <= x0 + 1 < nx:
            val += img[y0, x0 + 1] * (1.0 - wy) * wx
    if 0 <= y0 + 1 < ny:
        if 0 <= x0 < nx:
            val += img[y0 + 1, x0] * wy * (1.0 - wx)
        if 0 <= x0 + 1 < nx:
            val += img[y0 + 1, x0 + 1] * wy * wx
    return val


@njit(cache=True, inline="always")
def _splat(img, fy, fx, v):
    ny, nx = img.shape
    y0 = int(math.floor(fy))
    x0 = int(math.floor(fx))
    wy = fy - y0
    wx = fx - x0
    if 0 <= y0 < ny:
        if 0 <= x0 < nx:
            img[y0, x0] += v * (1.0 - wy) * (1.0 - wx)
        if 0 <= x0 + 1 < nx:
            img[y0, x0 + 1] += v * (1.0 - wy) * wx
    if 0 <= y0 + 1 < ny:
        if 0 <= x0 < nx:
            img[y0 + 1, x0] += v * wy * (1.0 - wx)
        if 0 <= x0 + 1 < nx:
            img[y0 + 1, x0 + 1] += v * wy * wx


@njit(cache=True, parallel=True, nogil=True)
def radon2d_forward(img, dy, dx, oy, ox, n_s, ds, n_mu, t_max, n_t):
    ny, nx = img.shape
    out = np.zeros((n_mu, n_s))
    dt = 2.0 * t_max / n_t
    cy = 0.5 * (ny - 1)
    cx = 0.5 * (nx - 1)
    dmu = math.pi / n_mu
    s0 = -0.5 * (n_s - 1) * ds
    for m in prange(n_mu):
        mu = m * dmu
        c = math.cos(mu)
        sn = math.sin(mu)
        for k in range(n_s):
            s = s0 + k * ds
            acc = 0.0
            for it in range(n_t):
                t = -t_max + (it + 0.5) * dt
                px = s * c - t * sn
                py = s * sn + t * c
                fx = (px + ox) / dx + cx
                fy = (py + oy) / dy + cy
                acc += _bilinear(img, fy, fx)
            out[m, k] = acc * dt
    return out


@njit(cache=True, parallel=True, nogil=True)
def radon2d_adjoint(sino, ny, nx, dy, dx, oy, ox, ds, t_max, n_t, scale):
    n_mu, n_s = sino.shape
    dt = 2.0 * t_max / n_t
    cy = 0.5 * (ny - 1)
    cx = 0.5 * (nx - 1)
    dmu = math.pi / n_mu
    s0 = -0.5 * (n_s - 1) * ds
    bufs = np.zeros((_ADJOINT_CHUNKS, ny, nx))
    for ch in prange(_ADJOINT_CHUNKS):
        m_lo = (n_mu * ch) // _ADJOINT_CHUNKS
        m_hi = (n_mu * (ch + 1)) // _ADJOINT_CHUNKS
        for m in range(m_lo, m_hi):
            mu = m * dmu
            c = math.cos(mu)
            sn = math.sin(mu)
            for k in range(n_s):
                s = s0 + k * ds
                v = sino[m, k] * dt * scale
                for it in range(n_t):
                    t = -t_max + (it + 0.5) * dt
                    px = s * c - t * sn
                    py = s * sn + t * c
                    fx = (px + ox) / dx + cx
                    fy = (py + oy) / dy + cy
                    _splat(bufs[ch], fy, fx, v)
    out = np.zeros((ny, nx))
    for ch in range(_ADJOINT_CHUNKS):
        out += bufs[ch]
    return out


@njit(cache=True, inline="always")
def _trilinear(vol, fz, fy, fx):
    nz, ny, nx = vol.shape
    z0 = int(math.floor(fz))
    y0 = int(math.floor(fy))
    x0 = int(math.floor(fx))
    wz = fz - z0
    wy = fy - y0
    wx = fx - x0
    val = 0.0
    for dz in range(2):
        z = z0 + dz
        if z < 0 or z >= nz:
            continue
        wgz = wz if dz == 1 else 1.0 - wz
        for dyy in range(2):
            y = y0 + dyy
            if y < 0 or y >= ny:
                continue
            wgy = wy if dyy == 1 else 1.0 - wy
            for dxx in range(2):
                x = x0 + dxx
                if x < 0 or x >= nx:
                    continue
                wgx = wx if dxx == 1 else 1.0 - wx
                val += vol[z, y, x] * wgz * wgy * wgx
    return val


@njit(cache=True, inline="always")
def _slab_range(p, d, lo, hi, t0, t1):
    """Clip [t0, t1] against lo <= p + t*d <= hi; returns (t0, t1, ok)."""
    if abs(d) > 1e-12:
        ta = (lo - p) / d
        tb = (hi - p) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        return t0, t1, True
    if p < lo or p > hi:
        return t0, t1, False
    return t0, t1, True


@njit(cache=True, parallel=True, nogil=True)
def cone_forward(
    vol, sp, ox, oy, oz, srcs, eus, evs, ews, sdd,
    n_rows, n_cols, drow, dcol, offr, offc, step,
):
    nz, ny, nx = vol.shape
    n_lam = srcs.shape[0]
    out = np.zeros((n_lam, n_rows, n_cols))
    crow = 0.5 * (n_rows - 1)
    ccol = 0.5 * (n_cols - 1)
    x_hi = ox + (nx - 1) * sp
    y_hi = oy + (ny - 1) * sp
    z_hi = oz + (nz - 1) * sp
    for idx in prange(n_lam * n_rows):
        l = idx // n_rows
        i = idx % n_rows
        sx = srcs[l, 0]
        sy = srcs[l, 1]
        sz = srcs[l, 2]
        y = (i - crow) * drow - offr
        for j in range(n_cols):
            x = (j - ccol) * dcol - offc
            dxr = x * eus[l, 0] + y * evs[l, 0] + sdd * ews[l, 0]
            dyr = x * eus[l, 1] + y * evs[l, 1] + sdd * ews[l, 1]
            dzr = x * eus[l, 2] + y * evs[l, 2] + sdd * ews[l, 2]
            norm = math.sqrt(dxr * dxr + dyr * dyr + dzr * dzr)
            dxr /= norm
            dyr /= norm
            dzr /= norm
            t0 = 0.0
            t1 = 1e30
            t0, t1, ok = _slab_range(sx, dxr, ox, x_hi, t0, t1)
            if ok:
                t0, t1, ok = _slab_range(sy, dyr, oy, y_hi, t0, t1)
            if ok:
                t0, t1, ok = _slab_range(sz, dzr, oz, z_hi, t0, t1)
            if not ok or t1 <= t0:
                out[l, i, j] = 0.0
                continue
            n = int(math.ceil((t1 - t0) / step))
            if n < 1:
                n = 1
            h = (t1 - t0) / n
            acc = 0.0
            for it in range(n):
                t = t0 + (it + 0.5) * h
                fx = (sx + t * dxr - ox) / sp
                fy = (sy + t * dyr - oy) / sp
                fz = (sz + t * dzr - oz) / sp
                acc += _trilinear(vol, fz, fy, fx)
            out[l, i, j] = acc * h
    return out


@njit(cache=True, parallel=True, nogil=True)
def cone_backproject_accum(
    out, stack, sp, ox, oy, oz, srcs, eus, evs, ews, sdd,
    drow, dcol, offr, offc, dlam, mode, siso,
):
    """Accumulate the backprojection of a projection stack into out.

    mode 0: weight dlam[l] / |x - a|^2 (shift-variant filtered projections);
    mode 1: weight 0.5 * dlam[l] * R * D / dw^2 (the FDK normalization).
    """
    nz, ny, nx = out.shape
    n_lam = stack.shape[0]
    n_rows = stack.shape[1]
    n_cols = stack.shape[2]
    crow = 0.5 * (n_rows - 1)
    ccol = 0.5 * (n_cols - 1)
    for kz in prange(nz):
        wz = oz + kz * sp
        for iy in range(ny):
            wy = oy + iy * sp
            for jx in range(nx):
                wx = ox + jx * sp
                acc = 0.0
                for l in range(n_lam):
                    vx = wx - srcs[l, 0]
                    vy = wy - srcs[l, 1]
                    vz = wz - srcs[l, 2]
                    dw = vx * ews[l, 0] + vy * ews[l, 1] + vz * ews[l, 2]
                    if dw <= 1e-9:
                        continue
                    du = vx * eus[l, 0] + vy * eus[l, 1] + vz * eus[l, 2]
                    dv = vx * evs[l, 0] + vy * evs[l, 1] + vz * evs[l, 2]
                    xd = sdd * du / dw
                    yd = sdd * dv / dw
                    fc = (xd + offc) / dcol + ccol
                    fr = (yd + offr) / drow + crow
                    val = _bilinear(stack[l], fr, fc)
                    if mode == 0:
                        w = dlam[l] / (vx * vx + vy * vy + vz * vz)
                    else:
                        w = 0.5 * dlam[l] * siso * sdd / (dw * dw)
                    acc += val * w
                out[kz, iy, jx] += acc


@njit(cache=True, parallel=True, nogil=True)
def cone_backproject_adjoint(
    vol, sp, ox, oy, oz, srcs, eus, evs, ews, sdd,
    n_rows, n_cols, drow, dcol, offr, offc, factor,
):
    """Exact transpose of cone_backproject_accum mode 0.

    factor carries voxel_volume / (pixel area); the dlam of the forward map
    cancels against the projection-stack quadrature weight.
    """
    nz, ny, nx = vol.shape
    n_lam = srcs.shape[0]
    out = np.zeros((n_lam, n_rows, n_cols))
    crow = 0.5 * (n_rows - 1)
    ccol = 0.5 * (n_cols - 1)
    for l in prange(n_lam):
        for kz in range(nz):
            wz = oz + kz * sp
            for iy in range(ny):
                wy = oy + iy * sp
                for jx in range(nx):
                    vx = ox + jx * sp - srcs[l, 0]
                    vy = wy - srcs[l, 1]
                    vz = wz - srcs[l, 2]
                    dw = vx * ews[l, 0] + vy * ews[l, 1] + vz * ews[l, 2]
                    if dw <= 1e-9:
                        continue
                    du = vx * eus[l, 0] + vy * eus[l, 1] + vz * eus[l, 2]
                    dv = vx * evs[l, 0] + vy * evs[l, 1] + vz * evs[l, 2]
                    xd = sdd * du / dw
                    yd = sdd * dv / dw
                    fc = (xd + offc) / dcol + ccol
                    fr = (yd + offr) / drow + crow
                    v = vol[kz, iy, jx] * factor / (vx * vx + vy * vy + vz * vz)
                    _splat(out[l], fr, fc, v)
    return out
