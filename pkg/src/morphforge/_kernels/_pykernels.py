"""Vectorised numpy implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable, and
the reference the compiled kernels are tested against. Signatures and
semantics must stay identical to ``_ckernels.pyx``.
"""
import numpy as np

INSIDE_EPS = 1e-9


def _bilinear(image, xs, ys):
    # image (H, W, C); xs, ys already clamped into the valid range
    h, w = image.shape[:2]
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[:, None]
    return ((1.0 - fx) * (1.0 - fy) * image[y0, x0]
            + fx * (1.0 - fy) * image[y0, x1]
            + (1.0 - fx) * fy * image[y1, x0]
            + fx * fy * image[y1, x1])


def rasterize_labels(triangles, height, width):
    """Label each pixel centre with the index of the first triangle containing it.

    Parameters
    ----------
    triangles : ndarray, shape (T, 3, 2)
        Triangle vertices as (x, y) pixel coordinates.
    height, width : int
        Raster size.

    Returns
    -------
    ndarray of int32, shape (height, width)
        Triangle index per pixel, -1 where no triangle covers the pixel.
    """
    triangles = np.ascontiguousarray(triangles, dtype=np.float64)
    labels = np.full((height, width), -1, dtype=np.int32)
    for t, tri in enumerate(triangles):
        (ax, ay), (bx, by), (cx, cy) = tri
        det = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
        if det == 0.0:
            continue
        x_lo = max(int(np.floor(tri[:, 0].min())), 0)
        x_hi = min(int(np.ceil(tri[:, 0].max())), width - 1)
        y_lo = max(int(np.floor(tri[:, 1].min())), 0)
        y_hi = min(int(np.ceil(tri[:, 1].max())), height - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        yy, xx = np.mgrid[y_lo:y_hi + 1, x_lo:x_hi + 1].astype(np.float64)
        l1 = ((bx - xx) * (cy - yy) - (cx - xx) * (by - yy)) / det
        l2 = ((cx - xx) * (ay - yy) - (ax - xx) * (cy - yy)) / det
        l3 = 1.0 - l1 - l2
        inside = (l1 >= -INSIDE_EPS) & (l2 >= -INSIDE_EPS) & (l3 >= -INSIDE_EPS)
        window = labels[y_lo:y_hi + 1, x_lo:x_hi + 1]
        window[inside & (window < 0)] = t
    return labels


def warp_blend(image_a, image_b, labels, affine_a, affine_b, alpha):
    """Piecewise-affine inverse warp of two images followed by a linear blend.

    For a pixel labelled with triangle ``t`` the source coordinates in image a
    are ``affine_a[t] @ (x, y, 1)`` (likewise for b); both are clamped to the
    image and sampled bilinearly. Unlabelled pixels blend the inputs directly.
    """
    image_a = np.asarray(image_a, dtype=np.float64)
    image_b = np.asarray(image_b, dtype=np.float64)
    h, w = labels.shape
    out = (1.0 - alpha) * image_a + alpha * image_b
    ys, xs = np.nonzero(labels >= 0)
    if ys.size == 0:
        return out
    t = labels[ys, xs]
    xf = xs.astype(np.float64)
    yf = ys.astype(np.float64)
    samples = []
    for image, aff in ((image_a, affine_a), (image_b, affine_b)):
        m = np.asarray(aff, dtype=np.float64)[t]
        sx = m[:, 0, 0] * xf + m[:, 0, 1] * yf + m[:, 0, 2]
        sy = m[:, 1, 0] * xf + m[:, 1, 1] * yf + m[:, 1, 2]
        sx = np.clip(sx, 0.0, w - 1)
        sy = np.clip(sy, 0.0, h - 1)
        samples.append(_bilinear(image, sx, sy))
    out[ys, xs] = (1.0 - alpha) * samples[0] + alpha * samples[1]
    return out


def warp_affine(image, matrix, out_height, out_width):
    """Inverse-map ``image`` through a 2x3 output-to-source matrix.

    Output pixels whose source falls outside the image are set to zero.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    m = np.asarray(matrix, dtype=np.float64)
    yy, xx = np.mgrid[0:out_height, 0:out_width].astype(np.float64)
    sx = (m[0, 0] * xx + m[0, 1] * yy + m[0, 2]).ravel()
    sy = (m[1, 0] * xx + m[1, 1] * yy + m[1, 2]).ravel()
    valid = ((sx >= -INSIDE_EPS) & (sx <= w - 1 + INSIDE_EPS)
             & (sy >= -INSIDE_EPS) & (sy <= h - 1 + INSIDE_EPS))
    out = np.zeros((out_height * out_width, image.shape[2]))
    if valid.any():
        out[valid] = _bilinear(image,
                               np.clip(sx[valid], 0.0, w - 1),
                               np.clip(sy[valid], 0.0, h - 1))
    return out.reshape(out_height, out_width, image.shape[2])


def lbp_offsets(radius, neighbors=8):
    angles = 2.0 * np.pi * np.arange(neighbors) / neighbors
    dx = np.round(radius * np.cos(angles), 12)
    dy = -np.round(radius * np.sin(angles), 12)
    return dx, dy


def lbp_codes(plane, radius):
    """8-neighbour circular LBP codes for every interior pixel.

    Neighbour ``k`` sits at angle ``2*pi*k/8`` counter-clockwise from east and
    sets bit ``k`` when its bilinear sample is >= the centre value.
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    r = int(radius)
    yy, xx = np.mgrid[r:h - r, r:w - r]
    center = plane[r:h - r, r:w - r]
    codes = np.zeros(center.shape, dtype=np.int64)
    dx, dy = lbp_offsets(r)
    for k in range(8):
        sx = xx + dx[k]
        sy = yy + dy[k]
        x0 = np.floor(sx).astype(np.intp)
        y0 = np.floor(sy).astype(np.intp)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx = sx - x0
        fy = sy - y0
        top = plane[y0, x0] + fx * (plane[y0, x1] - plane[y0, x0])
        bottom = plane[y1, x0] + fx * (plane[y1, x1] - plane[y1, x0])
        value = top + fy * (bottom - top)
        codes |= (value >= center).astype(np.int64) << k
    return codes.astype(np.uint8)
