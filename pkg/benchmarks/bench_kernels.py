"""Compare the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--size 256] [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel and backend, the speed-up,
and whether both backends produced identical output.
"""
import argparse
import timeit

import numpy as np

from morphforge._kernels import _pykernels
from morphforge.imaging import border_anchors
from morphforge.lma_morph import delaunay_triangulate, piecewise_affines

try:
    from morphforge._kernels import _ckernels
except ImportError:
    _ckernels = None


def workloads(size, rng):
    pts = np.vstack([border_anchors(size, size), rng.uniform(2, size - 3, (68, 2))])
    moved = pts + np.r_[np.zeros((8, 2)), rng.uniform(-2, 2, (68, 2))]
    mesh = delaunay_triangulate(pts)
    tris = mesh.triangle_points()
    a, b = rng.random((size, size, 3)), rng.random((size, size, 3))
    aff = piecewise_affines(mesh, pts, moved)
    labels = _pykernels.rasterize_labels(tris, size, size)
    m = np.array([[0.9, 0.1, 3.0], [-0.1, 0.9, 5.0]])
    plane = rng.random((size, size))
    return {
        "rasterize_labels": lambda k: k.rasterize_labels(tris, size, size),
        "warp_blend": lambda k: k.warp_blend(a, b, labels, aff, aff, 0.5),
        "warp_affine": lambda k: k.warp_affine(a, m, size, size),
        "lbp_codes": lambda k: k.lbp_codes(plane, 2),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numpy ms':>12}{'cython ms':>12}{'speed-up':>10}  identical")
    for name, fn in workloads(args.size, rng).items():
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        t_c = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        same = np.array_equal(fn(_pykernels), fn(_ckernels))
        print(f"{name:<18}{t_py:>12.2f}{t_c:>12.2f}{t_py / t_c:>9.1f}x  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
