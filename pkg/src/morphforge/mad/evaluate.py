"""Known-attack and cross-set detection protocols."""
import numpy as np

from ..reference import detectability_reference
from .metrics import det_metrics
from .model import features_for


def _config_key(config):
    return (config.color_spaces, config.pyramid_levels, config.lbp_radii)


def cross_set_scores(models, test_sets):
    """Fused scores of every model on every test set.

    Returns ``{(train_type, test_type): (attack_scores, bonafide_scores)}``.
    Features are extracted once per test set and feature configuration.
    """
    cache = {}

    def feats(test_type, which, config):
        key = (test_type, which, _config_key(config))
        if key not in cache:
            cache[key] = features_for(test_sets[test_type][which], config)
        return cache[key]

    scores = {}
    for train_type, model in models.items():
        for test_type in test_sets:
            att = [model.score_features(f) for f in feats(test_type, 0, model.config)]
            bona = [model.score_features(f) for f in feats(test_type, 1, model.config)]
            scores[(train_type, test_type)] = (att, bona)
    return scores


def cross_set_evaluate(models, test_sets):
    """Evaluate every model on every test set.

    Parameters
    ----------
    models : dict
        Training attack type -> MadModel.
    test_sets : dict
        Test attack type -> ``(attack_images, bonafide_images)``.

    Returns
    -------
    dict
        ``{(train_type, test_type): DetReport}``; cells with equal types are
        the known-attack results.
    """
    return {key: det_metrics(att, bona) for key, (att, bona) in cross_set_scores(models, test_sets).items()}


def grid_report(grid, seed=None):
    cells = []
    for (train_type, test_type), rep in sorted(grid.items()):
        cell = {"train_attack": train_type, "test_attack": test_type,
                "known": train_type == test_type}
        cell.update(rep.to_json())
        cells.append(cell)
    return {"cells": cells, "seed": seed, "reference": detectability_reference()}


def score_rows(image_ids, labels, scores):
    """CSV body for ``image_id,label,score`` score files."""
    lines = ["image_id,label,score"]
    for i, l, s in zip(image_ids, labels, scores):
        lines.append(f"{i},{l},{float(s)!r}")
    return "\n".join(lines) + "\n"


def diagonal_vs_offdiagonal(grid):
    """Mean known-attack D-EER and mean cross-set D-EER."""
    diag = [r.d_eer for (a, b), r in grid.items() if a == b]
    off = [r.d_eer for (a, b), r in grid.items() if a != b]
    return float(np.mean(diag)) if diag else float("nan"), float(np.mean(off)) if off else float("nan")


_DET_SCHEMA = {
    "type": "object",
    "required": ["train_attack", "test_attack", "known", "d_eer", "bpcer_at_apcer", "roc"],
    "additionalProperties": False,
    "properties": {
        "train_attack": {"type": "string"},
        "test_attack": {"type": "string"},
        "known": {"type": "boolean"},
        "d_eer": {"type": "number", "minimum": 0, "maximum": 1},
        "bpcer_at_apcer": {"type": "object", "required": ["0.05", "0.10"],
                           "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1}},
        "roc": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                           "minItems": 3, "maxItems": 3}},
    },
}

MAD_REPORT_SCHEMA = {
    "type": "object",
    "required": ["cells", "seed", "reference"],
    "additionalProperties": False,
    "properties": {
        "cells": {"type": "array", "items": _DET_SCHEMA},
        "seed": {"type": ["integer", "null"]},
        "reference": {"type": "object"},
    },
}
