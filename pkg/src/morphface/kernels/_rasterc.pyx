# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled rasterizer kernel.

Semantics and floating point expressions are kept line-for-line identical to
``raster_py.raster_kernel`` so both backends produce bit-equal buffers; see
that module for the conventions.
"""

from libc.math cimport ceil, floor, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()


def raster_kernel(double[:, ::1] proj, int[:, ::1] tris, int width, int height,
                  double near, bint cull):
    cdef cnp.ndarray[cnp.int32_t, ndim=2] tri_id_arr = np.full(
        (height, width), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] bary_arr = np.zeros(
        (height, width, 3), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] depth_arr = np.full(
        (height, width), np.inf, dtype=np.float64)
    cdef int[:, ::1] tri_id = tri_id_arr
    cdef double[:, :, ::1] bary = bary_arr
    cdef double[:, ::1] depth = depth_arr

    cdef Py_ssize_t f, px, py
    cdef int i0, i1, i2, px0, px1, py0, py1
    cdef double x0, y0, z0, x1, y1, z1, x2, y2, z2
    cdef double a2, lo_x, hi_x, lo_y, hi_y, cx, cy
    cdef double dpx0, dpx1, dpy0, dpy1
    cdef double e0, e1, e2, u0, u1, u2, dsum, d
    cdef bint inside

    for f in range(tris.shape[0]):
        i0 = tris[f, 0]
        i1 = tris[f, 1]
        i2 = tris[f, 2]
        z0 = proj[i0, 2]
        z1 = proj[i1, 2]
        z2 = proj[i2, 2]
        if z0 < near or z1 < near or z2 < near:
            continue
        x0 = proj[i0, 0]
        y0 = proj[i0, 1]
        x1 = proj[i1, 0]
        y1 = proj[i1, 1]
        x2 = proj[i2, 0]
        y2 = proj[i2, 1]
        a2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if a2 == 0.0 or (cull and a2 > 0.0):
            continue
        lo_x = min(min(x0, x1), x2)
        hi_x = max(max(x0, x1), x2)
        lo_y = min(min(y0, y1), y2)
        hi_y = max(max(y0, y1), y2)
        # clamp in double precision before casting to avoid int overflow on
        # far off-screen coordinates
        dpx0 = ceil(lo_x - 0.5)
        dpx1 = floor(hi_x - 0.5)
        dpy0 = ceil(lo_y - 0.5)
        dpy1 = floor(hi_y - 0.5)
        if dpx0 > width - 1 or dpx1 < 0 or dpy0 > height - 1 or dpy1 < 0:
            continue
        px0 = 0 if dpx0 < 0 else <int>dpx0
        px1 = width - 1 if dpx1 > width - 1 else <int>dpx1
        py0 = 0 if dpy0 < 0 else <int>dpy0
        py1 = height - 1 if dpy1 > height - 1 else <int>dpy1
        if px0 > px1 or py0 > py1:
            continue
        for py in range(py0, py1 + 1):
            cy = py + 0.5
            for px in range(px0, px1 + 1):
                cx = px + 0.5
                e0 = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
                e1 = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)
                e2 = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
                if a2 < 0.0:
                    inside = e0 <= 0.0 and e1 <= 0.0 and e2 <= 0.0
                else:
                    inside = e0 >= 0.0 and e1 >= 0.0 and e2 >= 0.0
                if not inside:
                    continue
                u0 = (e0 / a2) / z0
                u1 = (e1 / a2) / z1
                u2 = (e2 / a2) / z2
                dsum = u0 + u1 + u2
                d = 1.0 / dsum
                if d < depth[py, px]:
                    depth[py, px] = d
                    tri_id[py, px] = <int>f
                    bary[py, px, 0] = u0 / dsum
                    bary[py, px, 1] = u1 / dsum
                    bary[py, px, 2] = u2 / dsum
    return tri_id_arr, bary_arr, depth_arr
