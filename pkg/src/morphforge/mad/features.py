"""Colour-space, Gaussian scale-space and LBP texture features."""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .. import _kernels
from ..errors import ValidationError
from ..imaging import as_pixels

COLOR_SPACES = ("RGB", "YCbCr", "HSV")
HIST_BINS = 256


@dataclass(frozen=True)
class FeatureConfig:
    color_spaces: tuple = COLOR_SPACES
    pyramid_levels: int = 3
    lbp_radii: tuple = (1, 2)
    lbp_neighbors: int = 8

    def __post_init__(self):
        object.__setattr__(self, "color_spaces", tuple(self.color_spaces))
        object.__setattr__(self, "lbp_radii", tuple(int(r) for r in self.lbp_radii))
        if not self.color_spaces:
            raise ValidationError("at least one colour space is required")
        unknown = set(self.color_spaces) - set(COLOR_SPACES)
        if unknown:
            raise ValidationError(f"unknown colour space(s) {sorted(unknown)}")
        if len(set(self.color_spaces)) != len(self.color_spaces):
            raise ValidationError("repeated colour space")
        if self.pyramid_levels < 1:
            raise ValidationError("pyramid_levels must be >= 1")
        if not self.lbp_radii or min(self.lbp_radii) < 1:
            raise ValidationError("LBP radii must be positive integers")
        if self.lbp_neighbors != 8:
            raise ValidationError("only 8-neighbour LBP is supported")

    @property
    def n_blocks(self):
        return len(self.color_spaces) * 3 * self.pyramid_levels * len(self.lbp_radii)

    def block_names(self):
        return [f"{space}:c{c}:l{level}:r{r}" for space in self.color_spaces for c in range(3)
                for level in range(self.pyramid_levels) for r in self.lbp_radii]

    def to_json(self):
        return {"color_spaces": list(self.color_spaces), "pyramid_levels": self.pyramid_levels,
                "lbp_radii": list(self.lbp_radii), "lbp_neighbors": self.lbp_neighbors}

    @classmethod
    def from_json(cls, doc):
        return cls(tuple(doc["color_spaces"]), int(doc["pyramid_levels"]),
                   tuple(doc["lbp_radii"]), int(doc["lbp_neighbors"]))


def _rgb_to_hsv(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(v == r, ((g - b) / safe_c) % 6.0,
                 np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0))
    h = np.where(c > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def color_transform(image, space) -> np.ndarray:
    """Convert to ``space``; returns (H, W, 3) planes scaled to [0, 1].

    YCbCr is ITU-R BT.601 full range with chroma offset by 0.5; HSV is the
    hexcone model with hue as a fraction of a turn.
    """
    rgb = as_pixels(image)
    if space == "RGB":
        return rgb.copy()
    if space == "YCbCr":
        r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
        y = 0.299 * r + 0.587 * g + 0.114 * b
        cb = 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b
        cr = 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b
        return np.clip(np.stack([y, cb, cr], axis=-1), 0.0, 1.0)
    if space == "HSV":
        return _rgb_to_hsv(rgb)
    raise ValidationError(f"unknown colour space {space!r}")


def gaussian_kernel(sigma=1.0, truncate=3.0):
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_pyramid(channel, levels):
    """Levels of a Gaussian pyramid: blur with sigma 1 (reflect borders), keep every other pixel."""
    plane = np.asarray(channel, dtype=np.float64)
    if levels < 1:
        raise ValidationError("levels must be >= 1")
    need = 2 ** (levels - 1)
    if plane.ndim != 2 or min(plane.shape) < need:
        raise ValidationError(f"plane {plane.shape} too small for {levels} pyramid levels (need >= {need} per side)")
    kernel = gaussian_kernel(1.0)
    out = [plane]
    for _ in range(levels - 1):
        blurred = correlate1d(correlate1d(out[-1], kernel, axis=0, mode="reflect"), kernel, axis=1, mode="reflect")
        out.append(blurred[::2, ::2])
    return out


def lbp_codes(plane, radius):
    plane = np.asarray(plane, dtype=np.float64)
    r = int(radius)
    if plane.ndim != 2 or min(plane.shape) <= 2 * r + 1:
        raise ValidationError(f"plane {plane.shape} too small for LBP radius {r}")
    return _kernels.lbp_codes(np.ascontiguousarray(plane), r)


def lbp_histogram(plane, radius, neighbors=8):
    """L1-normalised 256-bin histogram of 8-neighbour circular LBP codes."""
    if neighbors != 8:
        raise ValidationError("only 8-neighbour LBP is supported")
    codes = lbp_codes(plane, radius)
    hist = np.bincount(codes.ravel(), minlength=HIST_BINS).astype(np.float64)
    return hist / hist.sum()


def extract_features(image, config: FeatureConfig = FeatureConfig(), hooks=()):
    """Feature blocks ordered by colour space, channel, pyramid level, radius.

    ``hooks`` are extra callables ``image -> list of 1-D blocks`` appended
    after the built-in blocks (e.g. learned filter-bank histograms).
    """
    blocks = []
    for space in config.color_spaces:
        planes = color_transform(image, space)
        for c in range(3):
            for level in gaussian_pyramid(planes[..., c], config.pyramid_levels):
                for r in config.lbp_radii:
                    blocks.append(lbp_histogram(level, r))
    for hook in hooks:
        blocks.extend(np.asarray(b, dtype=np.float64) for b in hook(image))
    return blocks
