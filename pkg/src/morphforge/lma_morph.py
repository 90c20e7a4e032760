"""Landmark-based morphing: interpolation, Delaunay mesh, piecewise-affine warp, blend."""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .errors import LandmarkError, SingularSystemError, TriangulationError, ValidationError, ImageError
from .imaging import FaceImage, all_collinear, as_pixels, as_points, COINCIDENT_TOL


class MorphMethod(str, Enum):
    LMA = "lma"
    REGEN = "regen"
    LATENT_INTERP = "latent-interp"


@dataclass(frozen=True)
class MorphSpec:
    image_a: str
    image_b: str
    alpha: float = 0.5
    method: MorphMethod = MorphMethod.LMA

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        object.__setattr__(self, "method", MorphMethod(self.method))


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertices (N, 2) and counter-clockwise vertex-index triples (T, 3)."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64, copy=True)
        t = np.array(self.triangles, dtype=np.int64, copy=True).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise TriangulationError("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def triangle_points(self, points=None) -> np.ndarray:
        """Corner coordinates (T, 3, 2), optionally taken from another point set."""
        pts = self.vertices if points is None else as_points(points)
        return pts[self.triangles]

    def areas(self) -> np.ndarray:
        p = self.triangle_points()
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))


def interpolate_landmarks(la, lb, alpha) -> np.ndarray:
    pa, pb = as_points(la), as_points(lb)
    if pa.shape != pb.shape:
        raise LandmarkError(f"landmark count mismatch: {len(pa)} vs {len(pb)}")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return pa.copy()
    if alpha == 1.0:
        return pb.copy()
    return (1.0 - alpha) * pa + alpha * pb


# --- Delaunay ----------------------------------------------------------------

def _orient(p, q, r):
    return (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1])


def _orient_bound(p, q, r):
    return 1e-12 * (abs((q[0] - p[0]) * (r[1] - p[1])) + abs((r[0] - p[0]) * (q[1] - p[1])))


def _incircle(a, b, c, d):
    """(det, error bound); det > 0 means d is inside the circle through ccw a, b, c."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    t1 = alift * (bdx * cdy - bdy * cdx)
    t2 = blift * (cdx * ady - cdy * adx)
    t3 = clift * (adx * bdy - ady * bdx)
    perm = (alift * (abs(bdx * cdy) + abs(bdy * cdx))
            + blift * (abs(cdx * ady) + abs(cdy * adx))
            + clift * (abs(adx * bdy) + abs(ady * bdx)))
    return t1 + t2 + t3, 1e-12 * perm


def _sweep_triangulation(pts, order):
    """Triangulate the convex hull by inserting points in lexicographic order."""
    tris = []
    p0, p1 = order[0], order[1]
    k = 2
    while k < len(order) and abs(_orient(pts[p0], pts[p1], pts[order[k]])) <= _orient_bound(pts[p0], pts[p1], pts[order[k]]):
        k += 1
    if k == len(order):
        raise TriangulationError("all points are collinear")
    run = list(order[:k])
    apex = order[k]
    left = _orient(pts[run[0]], pts[run[1]], pts[apex]) > 0
    for i in range(len(run) - 1):
        u, v = run[i], run[i + 1]
        tris.append((u, v, apex) if left else (v, u, apex))
    hull = run + [apex] if left else [run[0], apex] + run[:0:-1]

    for p in order[k + 1:]:
        pp = pts[p]
        m = len(hull)
        vis = []
        for i in range(m):
            u, v = pts[hull[i]], pts[hull[(i + 1) % m]]
            o = _orient(u, v, pp)
            vis.append(o < -_orient_bound(u, v, pp))
        if not any(vis):
            raise TriangulationError("point insertion failed (numerically degenerate input)")
        j = next(i for i in range(m) if vis[i] and not vis[i - 1])
        n_vis = 0
        while vis[(j + n_vis) % m]:
            n_vis += 1
        for t in range(n_vis):
            u, v = hull[(j + t) % m], hull[(j + t + 1) % m]
            tris.append((v, u, p))
        hull = [hull[(j + n_vis + t) % m] for t in range(m - n_vis + 1)] + [p]
    return tris


def _third(tri, u, v):
    for w in tri:
        if w != u and w != v:
            return w
    raise TriangulationError("corrupt triangle")


def _lawson_flip(pts, tris):
    tris = [tuple(t) for t in tris]
    edges = {}
    for idx, (a, b, c) in enumerate(tris):
        edges[(a, b)] = idx
        edges[(b, c)] = idx
        edges[(c, a)] = idx
    stack = [e for e in edges if (e[1], e[0]) in edges and e[0] < e[1]]
    guard = 0
    limit = 50 * len(pts) ** 2 + 1000
    while stack:
        guard += 1
        if guard > limit:
            raise TriangulationError("edge flipping did not converge")
        u, v = stack.pop()
        t1 = edges.get((u, v))
        t2 = edges.get((v, u))
        if t1 is None or t2 is None:
            continue
        w = _third(tris[t1], u, v)
        x = _third(tris[t2], v, u)
        det, bound = _incircle(pts[u], pts[v], pts[w], pts[x])
        if det <= bound:
            continue
        # both new triangles must be properly counter-clockwise
        if (_orient(pts[u], pts[x], pts[w]) <= _orient_bound(pts[u], pts[x], pts[w])
                or _orient(pts[x], pts[v], pts[w]) <= _orient_bound(pts[x], pts[v], pts[w])):
            continue
        for tri in (tris[t1], tris[t2]):
            a, b, c = tri
            for e in ((a, b), (b, c), (c, a)):
                edges.pop(e, None)
        tris[t1] = (u, x, w)
        tris[t2] = (x, v, w)
        for idx in (t1, t2):
            a, b, c = tris[idx]
            edges[(a, b)] = idx
            edges[(b, c)] = idx
            edges[(c, a)] = idx
        stack.extend([(u, x), (x, v), (v, w), (w, u)])
    return tris


def _canonical(tri):
    i = int(np.argmin(tri))
    return tuple(int(v) for v in tri[i:] + tri[:i])


def delaunay_triangulate(points) -> TriangleMesh:
    """Delaunay triangulation of a planar point set.

    Cocircular configurations are resolved by insertion order (lexicographic
    by x, then y), so the output is a deterministic function of the input.
    """
    pts = as_points(points)
    if len(pts) < 3:
        raise TriangulationError("need at least 3 points")
    if not np.all(np.isfinite(pts)):
        raise TriangulationError("non-finite coordinates")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    if dist.min() <= COINCIDENT_TOL:
        raise TriangulationError("coincident points")
    if all_collinear(pts):
        raise TriangulationError("all points are collinear")
    order = [int(i) for i in np.lexsort((pts[:, 1], pts[:, 0]))]
    plist = [tuple(p) for p in pts.tolist()]
    tris = _sweep_triangulation(plist, order)
    tris = _lawson_flip(plist, tris)
    tris = sorted(_canonical(list(t)) for t in tris)
    mesh = TriangleMesh(pts, np.array(tris, dtype=np.int64))
    if np.any(mesh.areas() <= 1e-12):
        raise TriangulationError("degenerate triangle in mesh")
    return mesh


# --- warping -------------------------------------------------------------------

def affine_from_triangles(src, dst) -> np.ndarray:
    """2x3 matrix ``M`` with ``M @ [x, y, 1] = dst_i`` for each source corner."""
    s = np.asarray(src, dtype=np.float64).reshape(3, 2)
    d = np.asarray(dst, dtype=np.float64).reshape(3, 2)
    system = np.hstack([s, np.ones((3, 1))])
    det = np.linalg.det(system)
    scale = max(np.abs(s - s.mean(axis=0)).max(), 1e-300)
    if not np.isfinite(det) or abs(det) <= 1e-12 * scale * scale:
        raise SingularSystemError("source triangle is degenerate")
    return np.linalg.solve(system, d).T


def piecewise_affines(mesh: TriangleMesh, target_points, source_points) -> np.ndarray:
    """Per-triangle (T, 2, 3) maps from target-frame to source-frame coordinates."""
    tgt = mesh.triangle_points(target_points)
    src = mesh.triangle_points(source_points)
    return np.stack([affine_from_triangles(t, s) for t, s in zip(tgt, src)])


def morph_pair(img_a, la, img_b, lb, alpha=0.5) -> FaceImage:
    """Landmark-based morph of two aligned face images.

    The mesh is triangulated once on the interpolated landmarks; each
    output pixel inside it is inverse-mapped into both sources, sampled
    bilinearly, and blended as ``(1 - alpha) * a + alpha * b``. Pixels outside
    the mesh blend the sources directly.
    """
    a, b = as_pixels(img_a), as_pixels(img_b)
    if a.shape != b.shape:
        raise ImageError(f"image size mismatch: {a.shape} vs {b.shape}")
    pa, pb = as_points(la), as_points(lb)
    target = interpolate_landmarks(pa, pb, alpha)
    mesh = delaunay_triangulate(target)
    h, w = a.shape[:2]
    labels = _kernels.rasterize_labels(mesh.triangle_points(), h, w)
    aff_a = piecewise_affines(mesh, target, pa)
    aff_b = piecewise_affines(mesh, target, pb)
    out = _kernels.warp_blend(a, b, labels, aff_a, aff_b, float(alpha))
    return FaceImage.from_array(out)
