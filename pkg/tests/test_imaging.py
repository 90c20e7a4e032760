import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_image
from morphforge.errors import AlignmentError, ImageError, LandmarkError, SamplingError, ValidationError
from morphforge.imaging import (FaceImage, LandmarkSet, align_face, apply_affine, bilinear_sample, border_anchors,
                                encode_png, invert_affine, load_image, load_landmarks, resize_image, save_image,
                                save_landmarks, scale_landmarks, similarity_transform, warp_image,
                                with_border_anchors)


def test_face_image_is_read_only_copy():
    arr = np.full((8, 8, 3), 0.5)
    img = FaceImage(arr)
    arr[0, 0, 0] = 0.0
    assert img.pixels[0, 0, 0] == 0.5
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1.0


@pytest.mark.parametrize("shape", [(8, 8), (8, 8, 4), (7, 8, 3)])
def test_face_image_rejects_bad_shapes(shape):
    with pytest.raises(ImageError):
        FaceImage(np.zeros(shape))


def test_face_image_rejects_out_of_range_unless_clipped():
    arr = np.full((8, 8, 3), 1.0 + 1e-9)
    with pytest.raises(ImageError):
        FaceImage(arr)
    assert FaceImage.from_array(arr).pixels.max() == 1.0
    with pytest.raises(ImageError):
        FaceImage.from_array(np.full((8, 8, 3), np.nan))


def test_png_round_trip_is_quantized(tmp_path, rng):
    img = random_image(rng, 12, 9)
    path = save_image(img, tmp_path / "a.png")
    back = load_image(path)
    assert back.size == (9, 12)
    assert back == img.quantized()
    assert encode_png(back) == path.read_bytes()


def test_load_image_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not a png")
    with pytest.raises(ImageError):
        load_image(bad)
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "missing.png")


def test_landmark_set_invariants():
    with pytest.raises(LandmarkError):
        LandmarkSet([[0, 0], [1, 1]])
    with pytest.raises(LandmarkError):
        LandmarkSet([[0, 0], [1, 1], [2, 2]])
    with pytest.raises(LandmarkError):
        LandmarkSet([[0, 0], [0, 0], [1, 2]])
    assert len(LandmarkSet([[0, 0], [1, 0], [0, 1]])) == 3


def test_border_anchors_are_corners_then_midpoints():
    anchors = border_anchors(10, 20)
    assert anchors.tolist() == [[0, 0], [9, 0], [9, 19], [0, 19], [4.5, 0], [9, 9.5], [4.5, 19], [0, 9.5]]
    lm = with_border_anchors(np.random.default_rng(0).random((68, 2)) * 9, 10, 20)
    assert len(lm) == 76


def test_landmark_file_round_trip_and_strict_keys(tmp_path):
    pts = np.random.default_rng(1).random((68, 2)) * 50
    path = save_landmarks("img1", LandmarkSet(pts), tmp_path / "l.json")
    image_id, lm = load_landmarks(path)
    assert image_id == "img1"
    np.testing.assert_array_equal(lm.points, pts)
    doc = json.loads(path.read_text())
    doc["extra"] = 1
    path.write_text(json.dumps(doc))
    with pytest.raises(LandmarkError):
        load_landmarks(path)
    path.write_text(json.dumps({"image_id": "x", "points": pts[:10].tolist()}))
    with pytest.raises(LandmarkError):
        load_landmarks(path)


def test_bilinear_sample_matches_hand_computation():
    plane = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert bilinear_sample(plane, 0.25, 0.5) == pytest.approx(0.75 * (0.5 * 0 + 0.5 * 2) + 0.25 * (0.5 * 1 + 0.5 * 3))
    assert bilinear_sample(plane, 1.0, 1.0) == 3.0
    with pytest.raises(SamplingError):
        bilinear_sample(plane, 1.0001, 0.0)
    with pytest.raises(SamplingError):
        bilinear_sample(plane, -0.1, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.2, 4.0), st.floats(-20, 20), st.floats(-20, 20))
def test_similarity_transform_recovers_exact_similarities(theta, scale, tx, ty):
    src = np.random.default_rng(3).random((10, 2)) * 30
    rot = scale * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    dst = src @ rot.T + [tx, ty]
    m = similarity_transform(src, dst)
    np.testing.assert_allclose(apply_affine(m, src), dst, atol=1e-9)
    np.testing.assert_allclose(apply_affine(invert_affine(m), dst), src, atol=1e-8)


def test_similarity_transform_degenerate_inputs():
    with pytest.raises(AlignmentError):
        similarity_transform([[1, 1], [1, 1]], [[0, 0], [1, 1]])
    with pytest.raises(AlignmentError):
        similarity_transform([[0, 0], [1, 1]], [[2, 2], [2, 2]])
    with pytest.raises(AlignmentError):
        similarity_transform([[0, 0], [1, 1]], [[0, 0], [1, 1], [2, 2]])


def test_warp_image_identity_and_translation(rng):
    img = random_image(rng, 10, 10)
    same = warp_image(img, [[1, 0, 0], [0, 1, 0]], (10, 10))
    np.testing.assert_allclose(same.pixels, img.pixels, atol=1e-12)
    shifted = warp_image(img, [[1, 0, 2], [0, 1, 0]], (10, 10))
    np.testing.assert_allclose(shifted.pixels[:, 2:], img.pixels[:, :8], atol=1e-12)
    assert np.all(shifted.pixels[:, :2] == 0.0)


def test_align_face_places_landmarks_on_template(rng):
    img = random_image(rng, 32, 32)
    src = np.array([[10.0, 12.0], [20.0, 12.0], [15.0, 22.0]])
    template = src * 0.5 + 2.0
    out, lm = align_face(img, src, template, 16)
    assert out.size == (16, 16)
    np.testing.assert_allclose(lm.points, template, atol=1e-9)


def test_resize_is_corner_aligned(rng):
    img = random_image(rng, 9, 9)
    big = resize_image(img, 17)
    np.testing.assert_allclose(big.pixels[::2, ::2], img.pixels, atol=1e-12)
    assert resize_image(img, (9, 9)) is img
    np.testing.assert_allclose(scale_landmarks([[8, 8], [4, 0]], 9, 17), [[16, 16], [8, 0]])


def test_validation_errors_are_value_errors():
    assert issubclass(ImageError, ValidationError)
    assert issubclass(ValidationError, ValueError)
