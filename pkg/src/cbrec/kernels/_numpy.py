"""Pure-numpy reference implementations of the sampling kernels.

Same sample points, same interpolation weights and the same boundary handling
as the numba backend; only loop structure differs.  Slow on large problems,
intended as a fallback and as an independent check.
"""

import math

import numpy as np


def _gather_bilinear(img, fy, fx):
    ny, nx = img.shape
    y0 = np.floor(fy).astype(np.int64)
    x0 = np.floor(fx).astype(np.int64)
    wy = fy - y0
    wx = fx - x0
    val = np.zeros(fy.shape)
    for oy_, ox_, w in (
        (0, 0, (1.0 - wy) * (1.0 - wx)),
        (0, 1, (1.0 - wy) * wx),
        (1, 0, wy * (1.0 - wx)),
        (1, 1, wy * wx),
    ):
        yi = y0 + oy_
        xi = x0 + ox_
        ok = (yi >= 0) & (yi < ny) & (xi >= 0) & (xi < nx)
        val[ok] += img[yi[ok], xi[ok]] * w[ok]
    return val


def _scatter_bilinear(img, fy, fx, v):
    ny, nx = img.shape
    y0 = np.floor(fy).astype(np.int64)
    x0 = np.floor(fx).astype(np.int64)
    wy = fy - y0
    wx = fx - x0
    for oy_, ox_, w in (
        (0, 0, (1.0 - wy) * (1.0 - wx)),
        (0, 1, (1.0 - wy) * wx),
        (1, 0, wy * (1.0 - wx)),
        (1, 1, wy * wx),
    ):
        yi = y0 + oy_
        xi = x0 + ox_
        ok = (yi >= 0) & (yi < ny) & (xi >= 0) & (xi < nx)
        np.add.at(img, (yi[ok], xi[ok]), v[ok] * w[ok])


def _gather_trilinear(vol, fz, fy, fx):
    nz, ny, nx = vol.shape
    z0 = np.floor(fz).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    x0 = np.floor(fx).astype(np.int64)
    wz = fz - z0
    wy = fy - y0
    wx = fx - x0
    val = np.zeros(fz.shape)
    for oz_ in (0, 1):
        wgz = wz if oz_ else 1.0 - wz
        zi = z0 + oz_
        for oy_ in (0, 1):
            wgy = wy if oy_ else 1.0 - wy
            yi = y0 + oy_
            for ox_ in (0, 1):
                wgx = wx if ox_ else 1.0 - wx
                xi = x0 + ox_
                ok = (
                    (zi >= 0) & (zi < nz)
                    & (yi >= 0) & (yi < ny)
                    & (xi >= 0) & (xi < nx)
                )
                val[ok] += vol[zi[ok], yi[ok], xi[ok]] * (wgz * wgy * wgx)[ok]
    return val


def radon2d_forward(img, dy, dx, oy, ox, n_s, ds, n_mu, t_max, n_t):
    ny, nx = img.shape
    out = np.zeros((n_mu, n_s))
    dt = 2.0 * t_max / n_t
    cy = 0.5 * (ny - 1)
    cx = 0.5 * (nx - 1)
    dmu = math.pi / n_mu
    s = (np.arange(n_s) - 0.5 * (n_s - 1)) * ds
    t = -t_max + (np.arange(n_t) + 0.5) * dt
    for m in range(n_mu):
        mu = m * dmu
        c = math.cos(mu)
        sn = math.sin(mu)
        px = s[:, None] * c - t[None, :] * sn
        py = s[:, None] * sn + t[None, :] * c
        fx = (px + ox) / dx + cx
        fy = (py + oy) / dy + cy
        out[m] = _gather_bilinear(img, fy, fx).sum(axis=1) * dt
    return out


def radon2d_adjoint(sino, ny, nx, dy, dx, oy, ox, ds, t_max, n_t, scale):
    n_mu, n_s = sino.shape
    dt = 2.0 * t_max / n_t
    cy = 0.5 * (ny - 1)
    cx = 0.5 * (nx - 1)
    dmu = math.pi / n_mu
    s = (np.arange(n_s) - 0.5 * (n_s - 1)) * ds
    t = -t_max + (np.arange(n_t) + 0.5) * dt
    out = np.zeros((ny, nx))
    for m in range(n_mu):
        mu = m * dmu
        c = math.cos(mu)
        sn = math.sin(mu)
        px = s[:, None] * c - t[None, :] * sn
        py = s[:, None] * sn + t[None, :] * c
        fx = (px + ox) / dx + cx
        fy = (py + oy) / dy + cy
        v = np.broadcast_to((sino[m] * dt * scale)[:, None], fx.shape)
        _scatter_bilinear(out, fy, fx, v)
    return out


def _slab_range(p, d, lo, hi, t0, t1):
    if abs(d) > 1e-12:
        ta = (lo - p) / d
        tb = (hi - p) / d
        if ta > tb:
            ta, tb = tb, ta
        return max(t0, ta), min(t1, tb), True
    if p < lo or p > hi:
        return t0, t1, False
    return t0, t1, True


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
    for l in range(n_lam):
        sx, sy, sz = srcs[l]
        for i in range(n_rows):
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
                t0, t1 = 0.0, 1e30
                t0, t1, ok = _slab_range(sx, dxr, ox, x_hi, t0, t1)
                if ok:
                    t0, t1, ok = _slab_range(sy, dyr, oy, y_hi, t0, t1)
                if ok:
                    t0, t1, ok = _slab_range(sz, dzr, oz, z_hi, t0, t1)
                if not ok or t1 <= t0:
                    continue
                n = max(1, int(math.ceil((t1 - t0) / step)))
                h = (t1 - t0) / n
                t = t0 + (np.arange(n) + 0.5) * h
                fx = (sx + t * dxr - ox) / sp
                fy = (sy + t * dyr - oy) / sp
                fz = (sz + t * dzr - oz) / sp
                out[l, i, j] = _gather_trilinear(vol, fz, fy, fx).sum() * h
    return out


def _voxel_projections(shape, sp, ox, oy, oz, src, eu, ev, ew, sdd):
    nz, ny, nx = shape
    wz = oz + np.arange(nz) * sp
    wy = oy + np.arange(ny) * sp
    wx = ox + np.arange(nx) * sp
    vx = wx[None, None, :] - src[0]
    vy = wy[None, :, None] - src[1]
    vz = wz[:, None, None] - src[2]
    dw = vx * ew[0] + vy * ew[1] + vz * ew[2]
    du = vx * eu[0] + vy * eu[1] + vz * eu[2]
    dv = vx * ev[0] + vy * ev[1] + vz * ev[2]
    dist2 = vx * vx + vy * vy + vz * vz
    ok = dw > 1e-9
    safe = np.where(ok, dw, 1.0)
    xd = sdd * du / safe
    yd = sdd * dv / safe
    return xd, yd, dw, dist2, ok


def cone_backproject_accum(
    out, stack, sp, ox, oy, oz, srcs, eus, evs, ews, sdd,
    drow, dcol, offr, offc, dlam, mode, siso,
):
    n_lam, n_rows, n_cols = stack.shape
    crow = 0.5 * (n_rows - 1)
    ccol = 0.5 * (n_cols - 1)
    for l in range(n_lam):
        xd, yd, dw, dist2, ok = _voxel_projections(
            out.shape, sp, ox, oy, oz, srcs[l], eus[l], evs[l], ews[l], sdd
        )
        fc = (xd + offc) / dcol + ccol
        fr = (yd + offr) / drow + crow
        val = _gather_bilinear(stack[l], fr, fc)
        if mode == 0:
            w = dlam[l] / dist2
        else:
            w = 0.5 * dlam[l] * siso * sdd / (dw * dw)
        out += np.where(ok, val * w, 0.0)


def cone_backproject_adjoint(
    vol, sp, ox, oy, oz, srcs, eus, evs, ews, sdd,
    n_rows, n_cols, drow, dcol, offr, offc, factor,
):
    n_lam = srcs.shape[0]
    out = np.zeros((n_lam, n_rows, n_cols))
    crow = 0.5 * (n_rows - 1)
    ccol = 0.5 * (n_cols - 1)
    for l in range(n_lam):
        xd, yd, dw, dist2, ok = _voxel_projections(
            vol.shape, sp, ox, oy, oz, srcs[l], eus[l], evs[l], ews[l], sdd
        )
        fc = ((xd + offc) / dcol + ccol)[ok]
        fr = ((yd + offr) / drow + crow)[ok]
        v = (vol * factor / dist2)[ok]
        _scatter_bilinear(out[l], fr, fc, v)
    return out
