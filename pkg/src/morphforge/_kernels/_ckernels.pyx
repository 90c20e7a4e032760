# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics mirror ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, cos, sin, rint, M_PI

cnp.import_array()

cdef double INSIDE_EPS = 1e-9


cdef inline double _clamp(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline void _bilinear(const double[:, :, ::1] img, double x, double y,
                           double* out) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], nc = img.shape[2]
    cdef Py_ssize_t x0 = <Py_ssize_t>floor(x), y0 = <Py_ssize_t>floor(y)
    cdef Py_ssize_t x1 = x0 + 1, y1 = y0 + 1, c
    if x1 > w - 1:
        x1 = w - 1
    if y1 > h - 1:
        y1 = h - 1
    cdef double fx = x - x0, fy = y - y0
    cdef double w00 = (1.0 - fx) * (1.0 - fy)
    cdef double w01 = fx * (1.0 - fy)
    cdef double w10 = (1.0 - fx) * fy
    cdef double w11 = fx * fy
    for c in range(nc):
        out[c] = (w00 * img[y0, x0, c] + w01 * img[y0, x1, c]
                  + w10 * img[y1, x0, c] + w11 * img[y1, x1, c])


def rasterize_labels(triangles, int height, int width):
    cdef const double[:, :, ::1] tri = np.ascontiguousarray(triangles, dtype=np.float64)
    labels_arr = np.full((height, width), -1, dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    cdef Py_ssize_t t, x, y, x_lo, x_hi, y_lo, y_hi
    cdef double ax, ay, bx, by, cx, cy, det, l1, l2, l3, xf, yf
    with nogil:
        for t in range(tri.shape[0]):
            ax = tri[t, 0, 0]; ay = tri[t, 0, 1]
            bx = tri[t, 1, 0]; by = tri[t, 1, 1]
            cx = tri[t, 2, 0]; cy = tri[t, 2, 1]
            det = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
            if det == 0.0:
                continue
            x_lo = <Py_ssize_t>floor(min(ax, min(bx, cx)))
            x_hi = <Py_ssize_t>ceil(max(ax, max(bx, cx)))
            y_lo = <Py_ssize_t>floor(min(ay, min(by, cy)))
            y_hi = <Py_ssize_t>ceil(max(ay, max(by, cy)))
            if x_lo < 0:
                x_lo = 0
            if y_lo < 0:
                y_lo = 0
            if x_hi > width - 1:
                x_hi = width - 1
            if y_hi > height - 1:
                y_hi = height - 1
            for y in range(y_lo, y_hi + 1):
                yf = <double>y
                for x in range(x_lo, x_hi + 1):
                    if labels[y, x] >= 0:
                        continue
                    xf = <double>x
                    l1 = ((bx - xf) * (cy - yf) - (cx - xf) * (by - yf)) / det
                    l2 = ((cx - xf) * (ay - yf) - (ax - xf) * (cy - yf)) / det
                    l3 = 1.0 - l1 - l2
                    if l1 >= -INSIDE_EPS and l2 >= -INSIDE_EPS and l3 >= -INSIDE_EPS:
                        labels[y, x] = <int>t
    return labels_arr


def warp_blend(image_a, image_b, labels, affine_a, affine_b, double alpha):
    cdef const double[:, :, ::1] a = np.ascontiguousarray(image_a, dtype=np.float64)
    cdef const double[:, :, ::1] b = np.ascontiguousarray(image_b, dtype=np.float64)
    cdef const int[:, ::1] lab = np.ascontiguousarray(labels, dtype=np.int32)
    cdef const double[:, :, ::1] ma = np.ascontiguousarray(affine_a, dtype=np.float64).reshape(-1, 2, 3)
    cdef const double[:, :, ::1] mb = np.ascontiguousarray(affine_b, dtype=np.float64).reshape(-1, 2, 3)
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1], nc = a.shape[2]
    out_arr = np.empty((h, w, nc), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t x, y, c
    cdef int t
    cdef double xf, yf, sx, sy
    cdef double sa[16]
    cdef double sb[16]
    if nc > 16:
        raise ValueError("too many channels")
    with nogil:
        for y in range(h):
            yf = <double>y
            for x in range(w):
                t = lab[y, x]
                if t < 0:
                    for c in range(nc):
                        out[y, x, c] = (1.0 - alpha) * a[y, x, c] + alpha * b[y, x, c]
                    continue
                xf = <double>x
                sx = ma[t, 0, 0] * xf + ma[t, 0, 1] * yf + ma[t, 0, 2]
                sy = ma[t, 1, 0] * xf + ma[t, 1, 1] * yf + ma[t, 1, 2]
                _bilinear(a, _clamp(sx, 0.0, w - 1), _clamp(sy, 0.0, h - 1), sa)
                sx = mb[t, 0, 0] * xf + mb[t, 0, 1] * yf + mb[t, 0, 2]
                sy = mb[t, 1, 0] * xf + mb[t, 1, 1] * yf + mb[t, 1, 2]
                _bilinear(b, _clamp(sx, 0.0, w - 1), _clamp(sy, 0.0, h - 1), sb)
                for c in range(nc):
                    out[y, x, c] = (1.0 - alpha) * sa[c] + alpha * sb[c]
    return out_arr


def warp_affine(image, matrix, int out_height, int out_width):
    cdef const double[:, :, ::1] img = np.ascontiguousarray(image, dtype=np.float64)
    cdef const double[:, ::1] m = np.ascontiguousarray(matrix, dtype=np.float64)
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], nc = img.shape[2]
    out_arr = np.zeros((out_height, out_width, nc), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t x, y, c
    cdef double xf, yf, sx, sy
    cdef double s[16]
    if nc > 16:
        raise ValueError("too many channels")
    with nogil:
        for y in range(out_height):
            yf = <double>y
            for x in range(out_width):
                xf = <double>x
                sx = m[0, 0] * xf + m[0, 1] * yf + m[0, 2]
                sy = m[1, 0] * xf + m[1, 1] * yf + m[1, 2]
                if (sx < -INSIDE_EPS or sx > w - 1 + INSIDE_EPS
                        or sy < -INSIDE_EPS or sy > h - 1 + INSIDE_EPS):
                    continue
                _bilinear(img, _clamp(sx, 0.0, w - 1), _clamp(sy, 0.0, h - 1), s)
                for c in range(nc):
                    out[y, x, c] = s[c]
    return out_arr


def lbp_codes(plane, int radius):
    cdef const double[:, ::1] p = np.ascontiguousarray(plane, dtype=np.float64)
    cdef Py_ssize_t h = p.shape[0], w = p.shape[1], r = radius
    codes_arr = np.zeros((h - 2 * r, w - 2 * r), dtype=np.uint8)
    cdef unsigned char[:, ::1] codes = codes_arr
    cdef double dx[8]
    cdef double dy[8]
    cdef int k
    cdef Py_ssize_t x, y, x0, y0, x1, y1
    cdef double sx, sy, fx, fy, top, bottom, value, center
    cdef unsigned char code
    for k in range(8):
        # same rounding as np.round(v, 12)
        dx[k] = rint(radius * cos(2.0 * M_PI * k / 8.0) * 1e12) / 1e12
        dy[k] = -(rint(radius * sin(2.0 * M_PI * k / 8.0) * 1e12) / 1e12)
    with nogil:
        for y in range(r, h - r):
            for x in range(r, w - r):
                center = p[y, x]
                code = 0
                for k in range(8):
                    sx = x + dx[k]
                    sy = y + dy[k]
                    x0 = <Py_ssize_t>floor(sx)
                    y0 = <Py_ssize_t>floor(sy)
                    x1 = x0 + 1
                    y1 = y0 + 1
                    if x1 > w - 1:
                        x1 = w - 1
                    if y1 > h - 1:
                        y1 = h - 1
                    fx = sx - x0
                    fy = sy - y0
                    top = p[y0, x0] + fx * (p[y0, x1] - p[y0, x0])
                    bottom = p[y1, x0] + fx * (p[y1, x1] - p[y1, x0])
                    value = top + fy * (bottom - top)
                    if value >= center:
                        code |= <unsigned char>(1 << k)
                codes[y - r, x - r] = code
    return codes_arr
