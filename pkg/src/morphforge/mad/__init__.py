"""Morphing attack detection: features, classifiers, metrics and protocols."""
from .evaluate import cross_set_evaluate, cross_set_scores, grid_report
from .features import (FeatureConfig, color_transform, extract_features, gaussian_pyramid, lbp_codes,
                       lbp_histogram)
from .metrics import DetReport, det_metrics
from .model import MadModel, fit_mad, load_model, mad_score, save_model, train_mad

__all__ = [
    "cross_set_evaluate", "cross_set_scores", "grid_report", "FeatureConfig", "color_transform", "extract_features",
    "gaussian_pyramid", "lbp_codes", "lbp_histogram", "DetReport", "det_metrics", "MadModel", "fit_mad",
    "load_model", "mad_score", "save_model", "train_mad",
]
