import colorsys

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from cases import random_det_scores
from oracles import det_oracle
from morphforge.errors import TrainingError, ValidationError
from morphforge.imaging import FaceImage
from morphforge.mad import (DetReport, FeatureConfig, MadModel, color_transform, cross_set_evaluate, det_metrics,
                            extract_features, fit_mad, gaussian_pyramid, grid_report, lbp_histogram, load_model,
                            mad_score, save_model, train_mad)
from morphforge.mad.evaluate import MAD_REPORT_SCHEMA, score_rows
from morphforge.mad.model import ridge_fit


def test_hsv_matches_colorsys():
    rng = np.random.default_rng(0)
    px = rng.random((8, 8, 3))
    px[0, 0] = [0.5, 0.5, 0.5]
    px[0, 1] = [0.0, 0.0, 0.0]
    hsv = color_transform(FaceImage(px), "HSV")
    for y in range(8):
        for x in range(8):
            np.testing.assert_allclose(hsv[y, x], colorsys.rgb_to_hsv(*px[y, x]), atol=1e-12)


def test_ycbcr_known_values():
    px = np.zeros((8, 8, 3))
    px[..., 0] = 1.0
    ycc = color_transform(FaceImage(px), "YCbCr")
    np.testing.assert_allclose(ycc[0, 0], [0.299, 0.5 - 0.168736, 1.0], atol=1e-12)
    gray = color_transform(FaceImage(np.full((8, 8, 3), 0.3)), "YCbCr")
    np.testing.assert_allclose(gray[0, 0], [0.3, 0.5, 0.5], atol=1e-12)
    with pytest.raises(ValidationError):
        color_transform(FaceImage(px), "Lab")


def test_pyramid_matches_scipy_gaussian_filter():
    plane = np.random.default_rng(1).random((32, 24))
    levels = gaussian_pyramid(plane, 3)
    assert [lv.shape for lv in levels] == [(32, 24), (16, 12), (8, 6)]
    expected = gaussian_filter(plane, 1.0, mode="reflect", truncate=3.0)[::2, ::2]
    np.testing.assert_allclose(levels[1], expected, atol=1e-12)
    with pytest.raises(ValidationError):
        gaussian_pyramid(np.zeros((3, 3)), 3)


def test_lbp_histogram_is_normalised():
    plane = np.random.default_rng(2).random((20, 20))
    h = lbp_histogram(plane, 2)
    assert h.shape == (256,)
    assert h.sum() == pytest.approx(1.0)
    flat = lbp_histogram(np.ones((10, 10)), 1)
    assert flat[255] == 1.0
    with pytest.raises(ValidationError):
        lbp_histogram(np.ones((5, 5)), 2)


def test_feature_block_layout():
    cfg = FeatureConfig(("RGB", "HSV"), 2, (1,))
    img = FaceImage(np.random.default_rng(3).random((16, 16, 3)))
    blocks = extract_features(img, cfg)
    assert len(blocks) == cfg.n_blocks == 2 * 3 * 2 * 1
    assert cfg.block_names()[:3] == ["RGB:c0:l0:r1", "RGB:c0:l1:r1", "RGB:c1:l0:r1"]
    assert len(extract_features(img, cfg, hooks=[lambda im: [np.ones(4)]])) == cfg.n_blocks + 1
    with pytest.raises(ValidationError):
        FeatureConfig(("RGB", "RGB"))
    with pytest.raises(ValidationError):
        FeatureConfig(lbp_neighbors=16)
    assert FeatureConfig.from_json(cfg.to_json()) == cfg


def test_det_metrics_simple_cases():
    perfect = det_metrics([2.0, 3.0], [0.0, 1.0])
    assert perfect.d_eer == 0.0
    assert perfect.bpcer_at_apcer == {0.05: 0.0, 0.10: 0.0}
    inverted = det_metrics([0.0, 1.0], [2.0, 3.0])
    assert inverted.d_eer == 1.0
    same = det_metrics([0.5, 0.5], [0.5, 0.5])
    assert same.d_eer == 0.5
    with pytest.raises(ValidationError):
        det_metrics([], [1.0])
    with pytest.raises(ValidationError):
        det_metrics([np.nan], [1.0])


@pytest.mark.parametrize("seed", range(20))
def test_det_metrics_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    att, bona = random_det_scores(rng, quantize=1 if seed % 2 else None)
    rep = det_metrics(att, bona)
    d_eer, bpcer_at = det_oracle(att, bona)
    assert rep.d_eer == d_eer
    assert rep.bpcer_at_apcer == bpcer_at


def test_det_curves_are_monotone():
    rng = np.random.default_rng(7)
    att, bona = random_det_scores(rng)
    rep = det_metrics(att, bona)
    apcer = [p[1] for p in rep.roc_points]
    bpcer = [p[2] for p in rep.roc_points]
    assert apcer == sorted(apcer) and apcer[-1] == 1.0
    assert bpcer == sorted(bpcer, reverse=True) and bpcer[-1] == 0.0
    assert DetReport.from_json(rep.to_json()) == rep


def test_ridge_fit_recovers_linear_map():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(200, 5))
    w = rng.normal(size=5)
    w_hat, b_hat = ridge_fit(x, x @ w + 0.3, lam=1e-9)
    np.testing.assert_allclose(w_hat, w, atol=1e-6)
    assert b_hat == pytest.approx(0.3, abs=1e-6)


def test_ridge_fit_non_finite_is_training_error():
    with pytest.raises(TrainingError):
        ridge_fit(np.full((4, 2), np.inf), np.ones(4))


def _separable_blocks(rng, n, shift, blocks=3, dim=8):
    return rng.normal(size=(n, blocks, dim)) * 0.1 + shift


def test_fit_mad_separates_and_round_trips(tmp_path):
    rng = np.random.default_rng(5)
    att, bona = _separable_blocks(rng, 30, 1.0), _separable_blocks(rng, 30, 0.0)
    model = fit_mad(att, bona)
    scores_a = [model.score_features(f) for f in att]
    scores_b = [model.score_features(f) for f in bona]
    assert min(scores_a) > max(scores_b)
    path = save_model(model, tmp_path / "m.json", seed=5)
    back = load_model(path)
    np.testing.assert_array_equal(back.weights, model.weights)
    np.testing.assert_array_equal(back.biases, model.biases)
    assert [back.score_features(f) for f in att] == scores_a
    with pytest.raises(ValidationError):
        model.score_features(att[0][:2])
    with pytest.raises(ValidationError):
        fit_mad(att[:0], bona)


def test_load_model_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"config": {}, "blocks": [], "fusion": "max"}')
    with pytest.raises(ValidationError):
        load_model(bad)
    bad.write_text("{")
    with pytest.raises(ValidationError):
        load_model(bad)


def test_model_invariants():
    with pytest.raises(ValidationError):
        MadModel(FeatureConfig(), np.zeros((2, 4)), np.zeros(3))
    with pytest.raises(ValidationError):
        MadModel(FeatureConfig(), np.zeros((2, 4)), np.zeros(2), fusion="max")


def _textured(rng, n, noise):
    base = np.linspace(0.2, 0.8, 24)[None, :, None] * np.ones((24, 24, 3))
    return [FaceImage.from_array(base + rng.normal(0, noise, base.shape)) for _ in range(n)]


def test_train_mad_on_images_and_cross_set_grid():
    rng = np.random.default_rng(6)
    cfg = FeatureConfig(("RGB",), 2, (1,))
    smooth, rough = _textured(rng, 12, 0.002), _textured(rng, 12, 0.08)
    other = _textured(rng, 12, 0.2)
    model = train_mad(rough[:6], smooth[:6], cfg)
    assert mad_score(rough[6], model) > mad_score(smooth[6], model)
    grid = cross_set_evaluate({"rough": model}, {"rough": (rough[6:], smooth[6:]), "other": (other, smooth[6:])})
    assert set(grid) == {("rough", "rough"), ("rough", "other")}
    assert grid[("rough", "rough")].d_eer == 0.0
    import jsonschema
    jsonschema.validate(grid_report(grid, seed=1), MAD_REPORT_SCHEMA)
    with pytest.raises(ValidationError):
        train_mad([], smooth, cfg)


def test_score_rows_format():
    assert score_rows(["a", "b"], ["attack", "bonafide"], [0.5, -1.0]) == "image_id,label,score\na,attack,0.5\nb,bonafide,-1.0\n"
