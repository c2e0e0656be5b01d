"""Numba-compiled hot loops: batched MI evaluation over pose grids and the
synthetic fisheye ray-march renderer.

The math mirrors the pure-numpy reference paths in `mi`/`camera`; agreement
is at float tolerance (the kernels use fastmath), while each individual
grid cell is computed independently, so results do not depend on the number
of worker threads.
"""

import numpy as np
import numba
from numba import njit, prange

from .camera import DENOM_EPS
from .rotations import euler_zyx_to_matrix, rot_z

N_BINS = 256


def set_threads(n: int | None) -> int:
    """Clamp and apply the numba thread count; returns the value in effect."""
    maxt = numba.config.NUMBA_NUM_THREADS
    if n is None or n < 1:
        n = maxt
    n = min(int(n), maxt)
    numba.set_num_threads(n)
    return n


@njit(cache=True, fastmath=True)
def _mi_single(rot_pts, refl, shift, img, fx, fy, skew, cx, cy, xi,
               k1, k2, p1, p2, width, height, joint, marg_x, marg_y,
               touched, log_table):
    n_pts = rot_pts.shape[0]
    n_used = 0
    for i in range(n_pts):
        xc = rot_pts[i, 0] - shift[0]
        yc = rot_pts[i, 1] - shift[1]
        zc = rot_pts[i, 2] - shift[2]
        norm = np.sqrt(xc * xc + yc * yc + zc * zc)
        if norm <= 0.0:
            continue
        den = zc / norm + xi
        if den <= DENOM_EPS:
            continue
        mx = (xc / norm) / den
        my = (yc / norm) / den
        r2 = mx * mx + my * my
        radial = 1.0 + k1 * r2 + k2 * r2 * r2
        mdx = mx * radial + 2.0 * p1 * mx * my + p2 * (r2 + 2.0 * mx * mx)
        mdy = my * radial + p1 * (r2 + 2.0 * my * my) + 2.0 * p2 * mx * my
        u = fx * mdx + skew * mdy + cx
        v = fy * mdy + cy
        if u < 0.0 or u > width - 1.0 or v < 0.0 or v > height - 1.0:
            continue
        iu = int(u)
        iv = int(v)
        if iu > width - 2:
            iu = width - 2
        if iv > height - 2:
            iv = height - 2
        fu = u - iu
        fv = v - iv
        top = (1.0 - fu) * img[iv, iu] + fu * img[iv, iu + 1]
        bot = (1.0 - fu) * img[iv + 1, iu] + fu * img[iv + 1, iu + 1]
        val = (1.0 - fv) * top + fv * bot
        yb = int(np.rint(val))
        if yb < 0:
            yb = 0
        elif yb > 255:
            yb = 255
        xb = int(refl[i])
        code = xb * N_BINS + yb
        joint[code] += 1
        marg_x[xb] += 1
        marg_y[yb] += 1
        touched[n_used] = code
        n_used += 1
    if n_used == 0:
        return np.nan, np.nan, np.nan, 0
    sx = 0.0
    sy = 0.0
    for k in range(N_BINS):
        c = marg_x[k]
        if c > 0:
            sx += c * log_table[c]
            marg_x[k] = 0
        c = marg_y[k]
        if c > 0:
            sy += c * log_table[c]
            marg_y[k] = 0
    sxy = 0.0
    for t in range(n_used):
        code = touched[t]
        c = joint[code]
        if c > 0:
            sxy += c * log_table[c]
            joint[code] = 0
    ln_n = log_table[n_used]
    h_x = ln_n - sx / n_used
    h_y = ln_n - sy / n_used
    h_xy = ln_n - sxy / n_used
    return h_x, h_y, h_xy, n_used


@njit(parallel=True, fastmath=True)
def _mi_grid(rot_pts, psi_idx, refl, shifts, img, fx, fy, skew, cx, cy, xi,
             k1, k2, p1, p2, width, height, log_table, min_points,
             out_n, out_hx, out_hy, out_hxy, out_mi):
    n_cells = shifts.shape[0]
    n_pts = rot_pts.shape[1]
    n_threads = numba.get_num_threads()
    joints = np.zeros((n_threads, N_BINS * N_BINS), dtype=np.int64)
    margs_x = np.zeros((n_threads, N_BINS), dtype=np.int64)
    margs_y = np.zeros((n_threads, N_BINS), dtype=np.int64)
    toucheds = np.zeros((n_threads, n_pts), dtype=np.int64)
    for m in prange(n_cells):
        tid = numba.get_thread_id()
        h_x, h_y, h_xy, n_used = _mi_single(
            rot_pts[psi_idx[m]], refl, shifts[m], img, fx, fy, skew, cx, cy,
            xi, k1, k2, p1, p2, width, height,
            joints[tid], margs_x[tid], margs_y[tid], toucheds[tid], log_table)
        out_n[m] = n_used
        if n_used >= min_points:
            out_hx[m] = h_x
            out_hy[m] = h_y
            out_hxy[m] = h_xy
            out_mi[m] = h_x + h_y - h_xy
        else:
            out_hx[m] = np.nan
            out_hy[m] = np.nan
            out_hxy[m] = np.nan
            out_mi[m] = -np.inf


def eval_thetas(thetas, roll, pitch, image, intr, points, min_points):
    """Numba backend for mi._eval_thetas: same outputs, batched over cells.

    The rotation depends on psi only (roll/pitch frozen), so points are
    pre-rotated once per distinct psi value.
    """
    thetas = np.ascontiguousarray(thetas, dtype=np.float64)
    pts = np.ascontiguousarray(points.xyz)
    refl = np.ascontiguousarray(points.reflectivity)
    img = np.ascontiguousarray(np.asarray(image, dtype=np.uint8))

    base = euler_zyx_to_matrix(roll, pitch, 0.0)
    psi_vals, psi_idx = np.unique(thetas[:, 3], return_inverse=True)
    rot_mats = np.stack([rot_z(p) @ base for p in psi_vals])
    rot_pts = np.einsum("pij,nj->pni", rot_mats, pts)
    shifts = np.einsum("mij,mj->mi", rot_mats[psi_idx], thetas[:, :3])

    m = thetas.shape[0]
    out_n = np.zeros(m, dtype=np.int64)
    out_hx = np.empty(m)
    out_hy = np.empty(m)
    out_hxy = np.empty(m)
    out_mi = np.empty(m)
    log_table = np.zeros(pts.shape[0] + 1)
    if pts.shape[0] >= 1:
        log_table[1:] = np.log(np.arange(1, pts.shape[0] + 1, dtype=np.float64))
    _mi_grid(np.ascontiguousarray(rot_pts), psi_idx.astype(np.int64), refl,
             np.ascontiguousarray(shifts), img,
             intr.fx, intr.fy, intr.s, intr.cx, intr.cy, intr.xi,
             intr.k1, intr.k2, intr.p1, intr.p2, intr.width, intr.height,
             log_table, min_points, out_n, out_hx, out_hy, out_hxy, out_mi)
    return out_n, out_hx, out_hy, out_hxy, out_mi


@njit(cache=True, fastmath=True)
def _bilinear(raster, col, row):
    h, w = raster.shape
    iu = int(col)
    iv = int(row)
    if iu > w - 2:
        iu = w - 2
    if iv > h - 2:
        iv = h - 2
    if iu < 0:
        iu = 0
    if iv < 0:
        iv = 0
    fu = col - iu
    fv = row - iv
    top = (1.0 - fu) * raster[iv, iu] + fu * raster[iv, iu + 1]
    bot = (1.0 - fu) * raster[iv + 1, iu] + fu * raster[iv + 1, iu + 1]
    return (1.0 - fv) * top + fv * bot


@njit(parallel=True, fastmath=True)
def march_rays(origin, dirs, valid,
               height_raster, h_res, h_ox, h_oy,
               refl_raster, r_res, r_ox, r_oy,
               step_m, tol_m, out_val, out_hit):
    """Ray/ground intersection by marching + bisection over a height field.

    Rasters are georeferenced north-up (col ~ +x, row ~ -y). Rays that leave
    the height raster footprint or never reach the ground are misses.
    """
    n = dirs.shape[0]
    hh, hw = height_raster.shape
    # world-space bounds of the height raster (pixel centers)
    xmin = h_ox
    xmax = h_ox + (hw - 1) * h_res
    ymax = h_oy
    ymin = h_oy - (hh - 1) * h_res
    h_max = np.max(height_raster)
    h_min = np.min(height_raster)
    for i in prange(n):
        out_hit[i] = False
        out_val[i] = 0.0
        if not valid[i]:
            continue
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        if dz >= -1e-12:
            continue  # level or upward ray: sky
        ox_, oy_, oz_ = origin[0], origin[1], origin[2]
        # bracket the terrain band with 1 m of slack so flat fields
        # (h_max == h_min) still yield a non-empty march interval
        t0 = (h_max + 1.0 - oz_) / dz
        if t0 < 0.0:
            t0 = 0.0
        t_end = (h_min - 1.0 - oz_) / dz
        # clip to the raster footprint in x and y
        if dx > 1e-15:
            t_exit = (xmax - ox_) / dx
            if t_exit < t_end:
                t_end = t_exit
        elif dx < -1e-15:
            t_exit = (xmin - ox_) / dx
            if t_exit < t_end:
                t_end = t_exit
        if dy > 1e-15:
            t_exit = (ymax - oy_) / dy
            if t_exit < t_end:
                t_end = t_exit
        elif dy < -1e-15:
            t_exit = (ymin - oy_) / dy
            if t_exit < t_end:
                t_end = t_exit
        if t_end <= t0:
            continue
        denom = np.abs(dx) + np.abs(dy)
        if np.abs(dz) > denom:
            denom = np.abs(dz)
        dt = step_m / denom
        # march until the ray drops below the terrain
        t_lo = t0
        x = ox_ + t_lo * dx
        y = oy_ + t_lo * dy
        inside_lo = (x >= xmin) and (x <= xmax) and (y >= ymin) and (y <= ymax)
        f_lo = 1.0
        if inside_lo:
            f_lo = (oz_ + t_lo * dz) - _bilinear(height_raster,
                                                 (x - h_ox) / h_res,
                                                 (h_oy - y) / h_res)
            if f_lo <= 0.0:
                continue  # started underground at the first in-bounds sample
        found = False
        t_hi = t_lo
        while t_hi < t_end:
            t_hi = t_hi + dt
            if t_hi > t_end:
                t_hi = t_end
            x = ox_ + t_hi * dx
            y = oy_ + t_hi * dy
            if x < xmin or x > xmax or y < ymin or y > ymax:
                break
            f_hi = (oz_ + t_hi * dz) - _bilinear(height_raster,
                                                 (x - h_ox) / h_res,
                                                 (h_oy - y) / h_res)
            if not inside_lo:
                # first sample inside the footprint becomes the bracket start
                inside_lo = True
                t_lo = t_hi
                f_lo = f_hi
                if f_lo <= 0.0:
                    break
                continue
            if f_hi <= 0.0:
                found = True
                break
            t_lo = t_hi
            f_lo = f_hi
            if t_hi >= t_end:
                break
        if not found:
            continue
        # bisection refinement
        for _ in range(64):
            if (t_hi - t_lo) <= tol_m:
                break
            t_mid = 0.5 * (t_lo + t_hi)
            x = ox_ + t_mid * dx
            y = oy_ + t_mid * dy
            f_mid = (oz_ + t_mid * dz) - _bilinear(height_raster,
                                                   (x - h_ox) / h_res,
                                                   (h_oy - y) / h_res)
            if f_mid > 0.0:
                t_lo = t_mid
            else:
                t_hi = t_mid
        t_hit = 0.5 * (t_lo + t_hi)
        hx_ = ox_ + t_hit * dx
        hy_ = oy_ + t_hit * dy
        col = (hx_ - r_ox) / r_res
        row = (r_oy - hy_) / r_res
        if col < 0.0 or col > refl_raster.shape[1] - 1.0 \
                or row < 0.0 or row > refl_raster.shape[0] - 1.0:
            continue
        out_val[i] = _bilinear(refl_raster, col, row)
        out_hit[i] = True
