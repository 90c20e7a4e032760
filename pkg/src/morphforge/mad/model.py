"""Per-block ridge classifiers fused by their mean score."""
import base64
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .._io import write_json
from ..errors import TrainingError, ValidationError
from .features import FeatureConfig, extract_features

RIDGE_LAMBDA = 1e-3
ATTACK_LABEL = 1.0
BONAFIDE_LABEL = 0.0

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["config", "blocks", "fusion"],
    "properties": {
        "config": {
            "type": "object",
            "additionalProperties": False,
            "required": ["color_spaces", "pyramid_levels", "lbp_radii", "lbp_neighbors"],
            "properties": {
                "color_spaces": {"type": "array", "items": {"enum": ["RGB", "YCbCr", "HSV"]}, "minItems": 1},
                "pyramid_levels": {"type": "integer", "minimum": 1},
                "lbp_radii": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "lbp_neighbors": {"const": 8},
            },
        },
        "blocks": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["weights", "bias"],
                "properties": {"weights": {"type": "string"}, "bias": {"type": "number"}},
            },
        },
        "fusion": {"enum": ["mean"]},
        "ridge": {"type": "number"},
        "seed": {"type": ["integer", "null"]},
    },
}


@dataclass(frozen=True, eq=False)
class MadModel:
    """Trained detector; weights (B, D) stored as float32 values, biases (B,)."""

    config: FeatureConfig
    weights: np.ndarray
    biases: np.ndarray
    fusion: str = "mean"

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float32).astype(np.float64)
        b = np.array(self.biases, dtype=np.float64).ravel()
        if w.ndim != 2 or w.shape[0] != b.shape[0]:
            raise ValidationError("weights and biases disagree on the block count")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("non-finite classifier parameters")
        if self.fusion != "mean":
            raise ValidationError(f"unknown fusion {self.fusion!r}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def n_blocks(self):
        return self.weights.shape[0]

    def block_scores(self, blocks):
        arr = np.asarray(blocks, dtype=np.float64)
        if arr.shape != self.weights.shape:
            raise ValidationError(f"feature blocks {arr.shape} do not match model {self.weights.shape}")
        return np.einsum("bd,bd->b", arr, self.weights) + self.biases

    def score_features(self, blocks) -> float:
        return float(np.mean(self.block_scores(blocks)))

    def to_json(self, seed=None):
        return {
            "config": self.config.to_json(),
            "blocks": [{"weights": base64.b64encode(np.asarray(w, dtype="<f4").tobytes()).decode("ascii"),
                        "bias": float(b)} for w, b in zip(self.weights, self.biases)],
            "fusion": self.fusion,
            "ridge": RIDGE_LAMBDA,
            "seed": seed,
        }

    @classmethod
    def from_json(cls, doc):
        try:
            jsonschema.validate(doc, MODEL_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ValidationError(f"model file does not match schema: {exc.message}") from exc
        weights = [np.frombuffer(base64.b64decode(blk["weights"]), dtype="<f4") for blk in doc["blocks"]]
        if len({w.size for w in weights}) > 1:
            raise ValidationError("model blocks have different lengths")
        return cls(FeatureConfig.from_json(doc["config"]), np.stack(weights),
                   np.array([blk["bias"] for blk in doc["blocks"]]), doc["fusion"])


def save_model(model: MadModel, path, seed=None):
    return write_json(path, model.to_json(seed=seed))


def load_model(path) -> MadModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ValidationError(f"{path}: cannot read model ({exc})") from exc
    return MadModel.from_json(doc)


def ridge_fit(x, y, lam=RIDGE_LAMBDA):
    """Least squares with an L2 penalty on the weights only (bias unpenalised)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise TrainingError("training features or labels are not finite")
    mx, my = x.mean(axis=0), y.mean()
    xc = x - mx
    gram = xc.T @ xc + lam * np.eye(x.shape[1])
    try:
        w = np.linalg.solve(gram, xc.T @ (y - my))
    except np.linalg.LinAlgError as exc:
        raise TrainingError(f"ridge system is singular ({exc})") from exc
    if not np.all(np.isfinite(w)):
        raise TrainingError("ridge solution is not finite")
    return w, float(my - mx @ w)


def fit_mad(attack_blocks, bonafide_blocks, config: FeatureConfig = FeatureConfig(), lam=RIDGE_LAMBDA) -> MadModel:
    """Train one ridge classifier per feature block.

    ``attack_blocks`` / ``bonafide_blocks`` have shape (n_samples, n_blocks, dim).
    """
    att = np.asarray(attack_blocks, dtype=np.float64)
    bona = np.asarray(bonafide_blocks, dtype=np.float64)
    if att.size == 0 or bona.size == 0 or len(att) == 0 or len(bona) == 0:
        raise ValidationError("training needs at least one attack and one bona fide sample")
    if att.shape[1:] != bona.shape[1:]:
        raise ValidationError("attack and bona fide features have different shapes")
    x = np.concatenate([att, bona])
    y = np.concatenate([np.full(len(att), ATTACK_LABEL), np.full(len(bona), BONAFIDE_LABEL)])
    weights, biases = [], []
    for blk in range(x.shape[1]):
        w, b = ridge_fit(x[:, blk, :], y, lam)
        weights.append(w)
        biases.append(b)
    return MadModel(config, np.stack(weights), np.array(biases))


def features_for(images, config: FeatureConfig):
    return np.stack([np.stack(extract_features(im, config)) for im in images])


def train_mad(train_attacks, train_bonafide, config: FeatureConfig = FeatureConfig()) -> MadModel:
    train_attacks, train_bonafide = list(train_attacks), list(train_bonafide)
    if not train_attacks or not train_bonafide:
        raise ValidationError("training needs at least one attack and one bona fide image")
    return fit_mad(features_for(train_attacks, config), features_for(train_bonafide, config), config)


def mad_score(image, model: MadModel) -> float:
    """Fused attack score; higher means more attack-like."""
    return model.score_features(extract_features(image, model.config))
