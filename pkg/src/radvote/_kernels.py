"""Numba voting kernels.

These are the hot loops: sphere-surface rasterization (slice-by-slice
discrete circles), Amanatides-Woo ray traversal, and point increments.
Each kernel carries an online peak tracker (best count, smallest flat index
on ties) so experiments never need a full argmax pass over large grids.

Flat voxel index convention is x-fastest: L = (iz * ny + iy) * nx + ix,
matching both the dump format and numpy argmax on the (nz, ny, nx) array.

The sphere membership rule is the arithmetic-circle annulus carried to 3D:
a voxel is on the sphere surface iff its center distance d from the sphere
center satisfies

    max(r - rho/2, 0)^2 <= d^2 < (r + rho/2)^2

computed slice by slice as rows of x-runs with exact per-voxel filtering,
so the emitted set equals the exhaustive brute-force test bit-for-bit
(same float expressions, z+y+x summation order).
"""

import math

import numpy as np
from numba import njit

# mutation hook for the selftest: a non-zero bias perturbs the sphere radius
# used by the kernel (and only the kernel), which the oracle check must catch
_sphere_radius_bias = 0.0


@njit(cache=True, nogil=True)
def cast_spheres(counts, ox, oy, oz, rho, centers, radii, bias,
                 best_c, best_i):
    """Rasterize N sphere surfaces into the grid.

    Returns (increments, dropped, best_c, best_i); a sphere contributing
    zero in-grid voxels counts as dropped.
    """
    nz, ny, nx = counts.shape
    h = 0.5 * rho
    increments = 0
    dropped = 0
    for s in range(centers.shape[0]):
        cx = centers[s, 0]
        cy = centers[s, 1]
        cz = centers[s, 2]
        r = radii[s] + bias
        if r <= 0.0:
            dropped += 1
            continue
        hiv = r + h
        hi2 = hiv * hiv
        lov = r - h
        if lov < 0.0:
            lov = 0.0
        lo2 = lov * lov
        hit = 0
        # conservative slice range: |dz| < r + h, widened one voxel;
        # rows and the x-runs inside them get the same treatment, with the
        # exact membership test deciding per voxel (bit-equal to the oracle)
        gz = (cz - oz) / rho - 0.5
        wz = hiv / rho
        iz0 = int(math.ceil(gz - wz)) - 1
        iz1 = int(math.floor(gz + wz)) + 1
        if iz0 < 0:
            iz0 = 0
        if iz1 > nz - 1:
            iz1 = nz - 1
        gxc = (cx - ox) / rho - 0.5
        gyc = (cy - oy) / rho - 0.5
        for iz in range(iz0, iz1 + 1):
            vz = oz + (iz + 0.5) * rho
            dz = vz - cz
            dz2 = dz * dz
            if dz2 >= hi2:
                continue
            # row range on y: dy^2 < hi^2 - dz^2, widened
            ry = math.sqrt(hi2 - dz2)
            wy = ry / rho
            iy0 = int(math.ceil(gyc - wy)) - 1
            iy1 = int(math.floor(gyc + wy)) + 1
            if iy0 < 0:
                iy0 = 0
            if iy1 > ny - 1:
                iy1 = ny - 1
            row_z = iz * ny
            for iy in range(iy0, iy1 + 1):
                vy = oy + (iy + 0.5) * rho
                dy = vy - cy
                dy2 = dy * dy
                A = hi2 - dz2 - dy2  # dx^2 must stay below A (strict)
                if A <= 0.0:
                    continue
                B = lo2 - dz2 - dy2  # dx^2 must reach B
                xlo = 0.0
                if B > 0.0:
                    xlo = math.sqrt(B)
                xhi = math.sqrt(A)
                wlo = xlo / rho
                whi = xhi / rho
                if xlo > 0.0:
                    # two mirrored x-runs; kept disjoint, any voxel the clip
                    # pushes across is still visited by the right run
                    rs = int(math.ceil(gxc + wlo)) - 1
                    re = int(math.floor(gxc + whi)) + 1
                    ls = int(math.ceil(gxc - whi)) - 1
                    le = int(math.floor(gxc - wlo)) + 1
                    if le > rs - 1:
                        le = rs - 1
                else:
                    rs = int(math.ceil(gxc - whi)) - 1
                    re = int(math.floor(gxc + whi)) + 1
                    ls = 0
                    le = -1  # empty left run
                row = (row_z + iy) * nx
                for half in range(2):
                    if half == 0:
                        x0, x1 = rs, re
                    else:
                        x0, x1 = ls, le
                    if x0 < 0:
                        x0 = 0
                    if x1 > nx - 1:
                        x1 = nx - 1
                    for ix in range(x0, x1 + 1):
                        vx = ox + (ix + 0.5) * rho
                        dx = vx - cx
                        d2 = dz2 + dy2 + dx * dx
                        if d2 < lo2 or d2 >= hi2:
                            continue
                        counts[iz, iy, ix] += 1
                        hit += 1
                        c = int(counts[iz, iy, ix])
                        li = row + ix
                        if c > best_c or (c == best_c and li < best_i):
                            best_c = c
                            best_i = li
        if hit == 0:
            dropped += 1
        increments += hit
    return increments, dropped, best_c, best_i


@njit(cache=True, nogil=True)
def cast_rays(counts, ox, oy, oz, rho, starts, dirs, best_c, best_i):
    """Amanatides-Woo traversal of N half-lines, clipped to the grid box.

    Returns (increments, dropped, best_c, best_i).
    """
    nz, ny, nx = counts.shape
    increments = 0
    dropped = 0
    lox, loy, loz = ox, oy, oz
    hix = ox + nx * rho
    hiy = oy + ny * rho
    hiz = oz + nz * rho
    for s in range(starts.shape[0]):
        px = starts[s, 0]
        py = starts[s, 1]
        pz = starts[s, 2]
        dx = dirs[s, 0]
        dy = dirs[s, 1]
        dz = dirs[s, 2]
        # slab clip
        t0 = 0.0
        t1 = math.inf
        ok = True
        for a in range(3):
            if a == 0:
                p, d, lo, hi = px, dx, lox, hix
            elif a == 1:
                p, d, lo, hi = py, dy, loy, hiy
            else:
                p, d, lo, hi = pz, dz, loz, hiz
            if d != 0.0:
                ta = (lo - p) / d
                tb = (hi - p) / d
                if ta > tb:
                    ta, tb = tb, ta
                if ta > t0:
                    t0 = ta
                if tb < t1:
                    t1 = tb
            elif p < lo or p > hi:
                ok = False
                break
        if not ok or t1 < t0:
            dropped += 1
            continue
        qx = px + t0 * dx
        qy = py + t0 * dy
        qz = pz + t0 * dz
        ix = int(math.floor((qx - ox) / rho))
        iy = int(math.floor((qy - oy) / rho))
        iz = int(math.floor((qz - oz) / rho))
        if ix < 0:
            ix = 0
        if ix > nx - 1:
            ix = nx - 1
        if iy < 0:
            iy = 0
        if iy > ny - 1:
            iy = ny - 1
        if iz < 0:
            iz = 0
        if iz > nz - 1:
            iz = nz - 1
        if dx > 0.0:
            stx = 1
            tmx = (ox + (ix + 1) * rho - px) / dx
            tdx = rho / dx
        elif dx < 0.0:
            stx = -1
            tmx = (ox + ix * rho - px) / dx
            tdx = -rho / dx
        else:
            stx = 0
            tmx = math.inf
            tdx = math.inf
        if dy > 0.0:
            sty = 1
            tmy = (oy + (iy + 1) * rho - py) / dy
            tdy = rho / dy
        elif dy < 0.0:
            sty = -1
            tmy = (oy + iy * rho - py) / dy
            tdy = -rho / dy
        else:
            sty = 0
            tmy = math.inf
            tdy = math.inf
        if dz > 0.0:
            stz = 1
            tmz = (oz + (iz + 1) * rho - pz) / dz
            tdz = rho / dz
        elif dz < 0.0:
            stz = -1
            tmz = (oz + iz * rho - pz) / dz
            tdz = -rho / dz
        else:
            stz = 0
            tmz = math.inf
            tdz = math.inf
        hit = 0
        while True:
            counts[iz, iy, ix] += 1
            hit += 1
            c = int(counts[iz, iy, ix])
            li = (iz * ny + iy) * nx + ix
            if c > best_c or (c == best_c and li < best_i):
                best_c = c
                best_i = li
            if tmx <= tmy and tmx <= tmz:
                ix += stx
                if ix < 0 or ix >= nx:
                    break
                tmx += tdx
            elif tmy <= tmz:
                iy += sty
                if iy < 0 or iy >= ny:
                    break
                tmy += tdy
            else:
                iz += stz
                if iz < 0 or iz >= nz:
                    break
                tmz += tdz
        increments += hit
    return increments, dropped, best_c, best_i


@njit(cache=True, nogil=True)
def cast_points(counts, ox, oy, oz, rho, targets, best_c, best_i):
    """Increment the voxel containing each target point (out-of-grid drops).

    Returns (increments, dropped, best_c, best_i).
    """
    nz, ny, nx = counts.shape
    increments = 0
    dropped = 0
    for s in range(targets.shape[0]):
        ix = int(math.floor((targets[s, 0] - ox) / rho))
        iy = int(math.floor((targets[s, 1] - oy) / rho))
        iz = int(math.floor((targets[s, 2] - oz) / rho))
        if ix < 0 or ix >= nx or iy < 0 or iy >= ny or iz < 0 or iz >= nz:
            dropped += 1
            continue
        counts[iz, iy, ix] += 1
        increments += 1
        c = int(counts[iz, iy, ix])
        li = (iz * ny + iy) * nx + ix
        if c > best_c or (c == best_c and li < best_i):
            best_c = c
            best_i = li
    return increments, dropped, best_c, best_i
