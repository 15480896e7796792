"""Pure-numpy rasterizer kernel; the reference twin of the Cython extension.

Both kernels implement identical semantics and identical floating point
expressions, so their outputs are bit-equal:

  * a triangle is dropped when any vertex depth < near, when its doubled
    signed screen area A2 is zero, or (with culling) when A2 > 0 — front
    faces appear counter-clockwise in the image, which with y pointing down
    means A2 < 0;
  * a pixel is covered when its center (px+0.5, py+0.5) satisfies the three
    closed edge-function tests for the triangle's orientation;
  * the triangle with the smallest perspective-correct depth wins; exact
    depth ties keep the lower triangle id;
  * stored barycentrics are perspective-correct attribute weights.
"""

import numpy as np


def raster_kernel(proj, tris, width, height, near, cull):
    x = proj[:, 0]
    y = proj[:, 1]
    z = proj[:, 2]
    tri_id = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    depth = np.full((height, width), np.inf, dtype=np.float64)

    for f in range(tris.shape[0]):
        i0, i1, i2 = tris[f]
        z0 = z[i0]
        z1 = z[i1]
        z2 = z[i2]
        if z0 < near or z1 < near or z2 < near:
            continue
        x0 = x[i0]
        y0 = y[i0]
        x1 = x[i1]
        y1 = y[i1]
        x2 = x[i2]
        y2 = y[i2]
        a2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if a2 == 0.0 or (cull and a2 > 0.0):
            continue
        lo_x = min(x0, x1, x2)
        hi_x = max(x0, x1, x2)
        lo_y = min(y0, y1, y2)
        hi_y = max(y0, y1, y2)
        px0 = max(int(np.ceil(lo_x - 0.5)), 0)
        px1 = min(int(np.floor(hi_x - 0.5)), width - 1)
        py0 = max(int(np.ceil(lo_y - 0.5)), 0)
        py1 = min(int(np.floor(hi_y - 0.5)), height - 1)
        if px0 > px1 or py0 > py1:
            continue
        cx = np.arange(px0, px1 + 1, dtype=np.float64)[None, :] + 0.5
        cy = np.arange(py0, py1 + 1, dtype=np.float64)[:, None] + 0.5
        e0 = (x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)
        e1 = (x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)
        e2 = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
        if a2 < 0.0:
            inside = (e0 <= 0.0) & (e1 <= 0.0) & (e2 <= 0.0)
        else:
            inside = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
        if not inside.any():
            continue
        u0 = (e0 / a2) / z0
        u1 = (e1 / a2) / z1
        u2 = (e2 / a2) / z2
        dsum = u0 + u1 + u2
        with np.errstate(divide="ignore"):
            d = 1.0 / dsum
        window = (slice(py0, py1 + 1), slice(px0, px1 + 1))
        update = inside & (d < depth[window])
        if not update.any():
            continue
        depth[window] = np.where(update, d, depth[window])
        tri_id[window] = np.where(update, np.int32(f), tri_id[window])
        sub = bary[window]
        sub[..., 0] = np.where(update, u0 / dsum, sub[..., 0])
        sub[..., 1] = np.where(update, u1 / dsum, sub[..., 1])
        sub[..., 2] = np.where(update, u2 / dsum, sub[..., 2])
    return tri_id, bary, depth
