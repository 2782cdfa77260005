"""Pure numpy rasterization kernel; import-time fallback for the compiled one.

Arithmetic is kept expression-for-expression identical to the Cython kernel so
both backends produce bitwise-equal buffers.
"""

from __future__ import annotations

import math

import numpy as np

NEAR_EPS = 1e-6

BACKEND_NAME = "python"


def rasterize_into(xs, ys, ds, faces, width, y_start, y_end, depth, face_id, bary):
    """Rasterize triangles into rows [y_start, y_end) of preallocated buffers.

    Args:
        xs, ys: (V,) float64 projected pixel coordinates.
        ds: (V,) float64 camera-space depth (> NEAR_EPS for usable vertices).
        faces: (F, 3) int32 vertex indices, front faces wind so that their
            projected screen area (y down) is negative.
        width: image width in pixels.
        y_start, y_end: row range owned by this call.
        depth / face_id / bary: (H, W [, 3]) buffers prefilled with
            +inf / -1 / 0; updated in place under a strict-less depth test.
    """
    n_faces = len(faces)
    for f in range(n_faces):
        i0, i1, i2 = faces[f]
        d0 = ds[i0]
        d1 = ds[i1]
        d2 = ds[i2]
        if d0 <= NEAR_EPS or d1 <= NEAR_EPS or d2 <= NEAR_EPS:
            continue
        x0 = xs[i0]; y0 = ys[i0]
        x1 = xs[i1]; y1 = ys[i1]
        x2 = xs[i2]; y2 = ys[i2]
        area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if not (area2 < 0.0):  # back-facing or degenerate
            continue

        lo_x = max(0, int(math.ceil(min(x0, x1, x2) - 0.5)))
        hi_x = min(width - 1, int(math.floor(max(x0, x1, x2) - 0.5)))
        lo_y = max(y_start, int(math.ceil(min(y0, y1, y2) - 0.5)))
        hi_y = min(y_end - 1, int(math.floor(max(y0, y1, y2) - 0.5)))
        if lo_x > hi_x or lo_y > hi_y:
            continue

        px = np.arange(lo_x, hi_x + 1, dtype=np.float64)[None, :] + 0.5
        py = np.arange(lo_y, hi_y + 1, dtype=np.float64)[:, None] + 0.5

        e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)

        # Top-left fill rule: ties on an edge belong to it only when the edge
        # points "down" (dy > 0) or is horizontal pointing "left" (dx < 0).
        tl0 = (y2 - y1) > 0.0 or ((y2 - y1) == 0.0 and (x2 - x1) < 0.0)
        tl1 = (y0 - y2) > 0.0 or ((y0 - y2) == 0.0 and (x0 - x2) < 0.0)
        tl2 = (y1 - y0) > 0.0 or ((y1 - y0) == 0.0 and (x1 - x0) < 0.0)
        inside = ((e0 < 0.0) | ((e0 == 0.0) & tl0)) \
            & ((e1 < 0.0) | ((e1 == 0.0) & tl1)) \
            & ((e2 < 0.0) | ((e2 == 0.0) & tl2))
        if not inside.any():
            continue

        w0 = e0 / area2
        w1 = e1 / area2
        w2 = e2 / area2
        q0 = w0 / d0
        q1 = w1 / d1
        q2 = w2 / d2
        s = q0 + q1 + q2
        z = 1.0 / s

        sub_depth = depth[lo_y:hi_y + 1, lo_x:hi_x + 1]
        upd = inside & (z < sub_depth)
        if not upd.any():
            continue
        sub_depth[upd] = z[upd]
        face_id[lo_y:hi_y + 1, lo_x:hi_x + 1][upd] = f
        sub_bary = bary[lo_y:hi_y + 1, lo_x:hi_x + 1]
        sub_bary[..., 0][upd] = (q0 / s)[upd]
        sub_bary[..., 1][upd] = (q1 / s)[upd]
        sub_bary[..., 2][upd] = (q2 / s)[upd]
