# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled rasterization kernel; arithmetic mirrors _raster_py bitwise."""

from libc.math cimport ceil, floor

cdef double NEAR_EPS = 1e-6

BACKEND_NAME = "compiled"


def rasterize_into(double[::1] xs, double[::1] ys, double[::1] ds,
                   int[:, ::1] faces, int width, int y_start, int y_end,
                   double[:, ::1] depth, int[:, ::1] face_id,
                   double[:, :, ::1] bary):
    """Rasterize triangles into rows [y_start, y_end); see _raster_py for the contract."""
    cdef Py_ssize_t f, n_faces = faces.shape[0]
    cdef int i0, i1, i2, lo_x, hi_x, lo_y, hi_y, ix, iy
    cdef double d0, d1, d2, x0, y0, x1, y1, x2, y2, area2
    cdef double mnx, mxx, mny, mxy, px, py
    cdef double e0, e1, e2, w0, w1, w2, q0, q1, q2, s, z
    cdef bint tl0, tl1, tl2, c0, c1, c2

    with nogil:
        for f in range(n_faces):
            i0 = faces[f, 0]; i1 = faces[f, 1]; i2 = faces[f, 2]
            d0 = ds[i0]; d1 = ds[i1]; d2 = ds[i2]
            if d0 <= NEAR_EPS or d1 <= NEAR_EPS or d2 <= NEAR_EPS:
                continue
            x0 = xs[i0]; y0 = ys[i0]
            x1 = xs[i1]; y1 = ys[i1]
            x2 = xs[i2]; y2 = ys[i2]
            area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            if not (area2 < 0.0):
                continue

            mnx = x0
            if x1 < mnx: mnx = x1
            if x2 < mnx: mnx = x2
            mxx = x0
            if x1 > mxx: mxx = x1
            if x2 > mxx: mxx = x2
            mny = y0
            if y1 < mny: mny = y1
            if y2 < mny: mny = y2
            mxy = y0
            if y1 > mxy: mxy = y1
            if y2 > mxy: mxy = y2

            lo_x = <int>ceil(mnx - 0.5)
            if lo_x < 0: lo_x = 0
            hi_x = <int>floor(mxx - 0.5)
            if hi_x > width - 1: hi_x = width - 1
            lo_y = <int>ceil(mny - 0.5)
            if lo_y < y_start: lo_y = y_start
            hi_y = <int>floor(mxy - 0.5)
            if hi_y > y_end - 1: hi_y = y_end - 1
            if lo_x > hi_x or lo_y > hi_y:
                continue

            tl0 = (y2 - y1) > 0.0 or ((y2 - y1) == 0.0 and (x2 - x1) < 0.0)
            tl1 = (y0 - y2) > 0.0 or ((y0 - y2) == 0.0 and (x0 - x2) < 0.0)
            tl2 = (y1 - y0) > 0.0 or ((y1 - y0) == 0.0 and (x1 - x0) < 0.0)

            for iy in range(lo_y, hi_y + 1):
                py = iy + 0.5
                for ix in range(lo_x, hi_x + 1):
                    px = ix + 0.5
                    e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                    c0 = e0 < 0.0 or (e0 == 0.0 and tl0)
                    if not c0:
                        continue
                    e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
                    c1 = e1 < 0.0 or (e1 == 0.0 and tl1)
                    if not c1:
                        continue
                    e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
                    c2 = e2 < 0.0 or (e2 == 0.0 and tl2)
                    if not c2:
                        continue
                    w0 = e0 / area2
                    w1 = e1 / area2
                    w2 = e2 / area2
                    q0 = w0 / d0
                    q1 = w1 / d1
                    q2 = w2 / d2
                    s = q0 + q1 + q2
                    z = 1.0 / s
                    if z < depth[iy, ix]:
                        depth[iy, ix] = z
                        face_id[iy, ix] = <int>f
                        bary[iy, ix, 0] = q0 / s
                        bary[iy, ix, 1] = q1 / s
                        bary[iy, ix, 2] = q2 / s
