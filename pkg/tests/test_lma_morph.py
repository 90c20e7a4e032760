import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import two_triangle_case
from oracles import convex_hull_area, empty_circle_violations, warp_oracle
from morphforge.errors import ImageError, LandmarkError, SingularSystemError, TriangulationError, ValidationError
from morphforge.imaging import FaceImage, border_anchors
from morphforge.lma_morph import (MorphMethod, MorphSpec, affine_from_triangles, delaunay_triangulate,
                                  interpolate_landmarks, morph_pair, piecewise_affines)


def test_interpolation_endpoints_are_exact():
    rng = np.random.default_rng(0)
    pa, pb = rng.random((10, 2)) * 7, rng.random((10, 2)) * 7
    np.testing.assert_array_equal(interpolate_landmarks(pa, pb, 0.0), pa)
    np.testing.assert_array_equal(interpolate_landmarks(pa, pb, 1.0), pb)
    np.testing.assert_allclose(interpolate_landmarks(pa, pb, 0.25), 0.75 * pa + 0.25 * pb)
    with pytest.raises(LandmarkError):
        interpolate_landmarks(pa, pb[:9], 0.5)
    with pytest.raises(ValidationError):
        interpolate_landmarks(pa, pb, 1.5)


def test_morph_spec_validates():
    assert MorphSpec("a", "b").method is MorphMethod.LMA
    assert MorphSpec("a", "b", method="latent-interp").method is MorphMethod.LATENT_INTERP
    with pytest.raises(ValidationError):
        MorphSpec("a", "b", alpha=-0.1)


def test_square_triangulation():
    mesh = delaunay_triangulate([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert len(mesh.triangles) == 2
    assert np.all(mesh.areas() > 0)
    assert mesh.areas().sum() == pytest.approx(1.0)


def test_triangulation_is_deterministic_under_cocircular_points():
    angles = np.linspace(0, 2 * np.pi, 9)[:-1]
    pts = np.c_[np.cos(angles), np.sin(angles)] * 5
    m1, m2 = delaunay_triangulate(pts), delaunay_triangulate(pts.copy())
    np.testing.assert_array_equal(m1.triangles, m2.triangles)
    assert len(m1.triangles) == 6


@pytest.mark.parametrize("pts, match", [
    ([[0, 0], [1, 1]], "at least 3"),
    ([[0, 0], [1, 1], [2, 2], [3, 3]], "collinear"),
    ([[0, 0], [0, 0], [1, 2]], "coincident"),
])
def test_triangulation_errors(pts, match):
    with pytest.raises(TriangulationError, match=match):
        delaunay_triangulate(pts)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=3, max_size=25, unique=True))
def test_delaunay_properties_on_integer_grids(raw):
    pts = np.array(raw, dtype=np.float64)
    try:
        mesh = delaunay_triangulate(pts)
    except TriangulationError:
        assert len({(y - raw[0][1]) * (raw[1][0] - raw[0][0]) - (x - raw[0][0]) * (raw[1][1] - raw[0][1])
                    for x, y in raw}) == 1
        return
    assert np.all(mesh.areas() > 0)
    assert mesh.areas().sum() == pytest.approx(convex_hull_area(pts))
    assert not empty_circle_violations(pts.tolist(), mesh.triangles.tolist())


def test_affine_from_triangles_maps_corners_and_rejects_degenerate():
    src = np.array([[0.0, 0.0], [4.0, 1.0], [1.0, 3.0]])
    dst = np.array([[2.0, 2.0], [5.0, 0.0], [3.0, 7.0]])
    m = affine_from_triangles(src, dst)
    np.testing.assert_allclose(np.c_[src, np.ones(3)] @ m.T, dst, atol=1e-12)
    with pytest.raises(SingularSystemError):
        affine_from_triangles([[0, 0], [1, 1], [2, 2]], dst)


def test_piecewise_affines_shape():
    pts = np.vstack([border_anchors(10, 10), [[5.0, 5.0]]])
    mesh = delaunay_triangulate(pts)
    assert piecewise_affines(mesh, pts, pts + 1.0).shape == (len(mesh.triangles), 2, 3)


@pytest.mark.parametrize("seed", range(4))
def test_morph_matches_per_pixel_oracle(seed):
    rng = np.random.default_rng(seed)
    img_a, pa, img_b, pb, alpha = two_triangle_case(rng)
    out = morph_pair(FaceImage(img_a), pa, FaceImage(img_b), pb, alpha)
    mesh = delaunay_triangulate(interpolate_landmarks(pa, pb, alpha))
    ref = np.array(warp_oracle(img_a.tolist(), pa.tolist(), img_b.tolist(), pb.tolist(),
                               mesh.triangles.tolist(), alpha))
    assert np.abs(out.pixels - ref).max() <= 1e-6


def test_morph_endpoints_reproduce_sources():
    rng = np.random.default_rng(5)
    pts = np.vstack([border_anchors(20, 20), rng.uniform(3, 16, (6, 2))])
    a = FaceImage(rng.random((20, 20, 3)))
    b = FaceImage(rng.random((20, 20, 3)))
    other = pts + np.r_[np.zeros((8, 2)), rng.uniform(-1, 1, (6, 2))]
    np.testing.assert_allclose(morph_pair(a, pts, b, other, 0.0).pixels, a.pixels, atol=1e-12)
    np.testing.assert_allclose(morph_pair(a, pts, b, other, 1.0).pixels, b.pixels, atol=1e-12)


def test_morph_rejects_mismatched_sizes():
    a = FaceImage(np.zeros((10, 10, 3)))
    b = FaceImage(np.zeros((12, 10, 3)))
    pts = [[0, 0], [9, 0], [0, 9]]
    with pytest.raises(ImageError):
        morph_pair(a, pts, b, pts)
