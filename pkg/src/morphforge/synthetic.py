"""Procedural face sprites with 68-point landmarks.

Stands in for a real face database and landmark detector at desk scale.
Each identity has fixed geometry, colouring and skin texture; each image of
that identity adds pose jitter, lighting change and sensor noise.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import write_json
from .imaging import FaceImage, LandmarkSet, save_image, save_landmarks


@dataclass(frozen=True)
class FaceParams:
    skin: tuple
    hair: tuple
    background: tuple
    lips: tuple
    iris: tuple
    face_rx: float      # fractions of the image side
    face_ry: float
    eye_dx: float
    eye_y: float
    eye_rx: float
    eye_ry: float
    brow_lift: float
    nose_len: float
    nose_w: float
    mouth_y: float
    mouth_w: float
    mouth_h: float
    texture_seed: int


def random_identity(rng) -> FaceParams:
    u = rng.uniform
    return FaceParams(
        skin=tuple(np.clip(np.array([0.85, 0.65, 0.5]) * u(0.55, 1.15) + u(-0.05, 0.05, 3), 0.1, 0.95)),
        hair=tuple(u(0.05, 0.6, 3)),
        background=tuple(u(0.3, 0.9, 3)),
        lips=tuple(np.clip(np.array([0.7, 0.25, 0.3]) * u(0.7, 1.2) + u(-0.05, 0.05, 3), 0.05, 0.95)),
        iris=tuple(u(0.05, 0.5, 3)),
        face_rx=u(0.26, 0.33),
        face_ry=u(0.34, 0.41),
        eye_dx=u(0.10, 0.14),
        eye_y=u(-0.12, -0.06),
        eye_rx=u(0.045, 0.065),
        eye_ry=u(0.022, 0.032),
        brow_lift=u(0.05, 0.08),
        nose_len=u(0.10, 0.15),
        nose_w=u(0.035, 0.055),
        mouth_y=u(0.17, 0.22),
        mouth_w=u(0.08, 0.12),
        mouth_h=u(0.025, 0.04),
        texture_seed=int(rng.integers(0, 2**31 - 1)),
    )


def _ellipse_pts(cx, cy, rx, ry, angles):
    return np.stack([cx + rx * np.cos(angles), cy + ry * np.sin(angles)], axis=1)


def face_landmarks(p: FaceParams, size, shift=(0.0, 0.0), scale=1.0) -> np.ndarray:
    """68 landmarks (x, y) in the common 68-point layout."""
    s = size * scale
    cx = (size - 1) / 2.0 + shift[0]
    cy = (size - 1) / 2.0 + 0.02 * size + shift[1]
    jaw_angles = np.linspace(np.pi + 0.2, -0.2, 17)
    jaw = _ellipse_pts(cx, cy, p.face_rx * s, p.face_ry * s, jaw_angles)
    jaw[:, 1] = np.maximum(jaw[:, 1], cy - 0.1 * s)

    ey = cy + p.eye_y * s
    brows = []
    for side in (-1, 1):
        bx = cx + side * p.eye_dx * s
        xs = bx + np.linspace(-1.3, 1.3, 5) * p.eye_rx * s
        ys = ey - p.brow_lift * s - 0.012 * s * (1 - np.linspace(-1, 1, 5) ** 2)
        brows.append(np.stack([xs, ys], axis=1))
    bridge = np.stack([np.full(4, cx), ey + np.linspace(0.0, p.nose_len, 4) * s], axis=1)
    nose_y = ey + (p.nose_len + 0.02) * s
    nose = np.stack([cx + np.linspace(-1, 1, 5) * p.nose_w * s,
                     nose_y - 0.01 * s * (1 - np.abs(np.linspace(-1, 1, 5)))], axis=1)
    eyes = []
    eye_angles = np.pi - np.arange(6) * np.pi / 3  # outer corner, upper lid, inner ..., lower lid
    for side in (-1, 1):
        ex = cx + side * p.eye_dx * s
        ang = eye_angles if side < 0 else np.pi - eye_angles
        eyes.append(_ellipse_pts(ex, ey, p.eye_rx * s, p.eye_ry * s, -ang))
    my = cy + p.mouth_y * s
    outer = _ellipse_pts(cx, my, p.mouth_w * s, p.mouth_h * s, np.pi - np.arange(12) * 2 * np.pi / 12)
    inner = _ellipse_pts(cx, my, 0.7 * p.mouth_w * s, 0.35 * p.mouth_h * s, np.pi - np.arange(8) * 2 * np.pi / 8)
    return np.vstack([jaw, brows[0], brows[1], bridge, nose, eyes[0], eyes[1], outer, inner])


def _soft_ellipse(xx, yy, cx, cy, rx, ry, softness=0.7):
    d = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    # signed distance in pixels, approximately
    sd = (d - 1.0) * min(rx, ry)
    return 1.0 / (1.0 + np.exp(np.clip(sd / softness, -50, 50)))


def _paint(canvas, mask, colour):
    colour = np.asarray(colour, dtype=np.float64)
    return canvas * (1.0 - mask[..., None]) + mask[..., None] * colour


def _skin_texture(p: FaceParams, size):
    rng = np.random.default_rng(p.texture_seed)
    coarse = rng.normal(size=(6, 6))
    yy, xx = np.mgrid[0:size, 0:size] * (5.0 / max(size - 1, 1))
    x0, y0 = np.floor(xx).astype(int), np.floor(yy).astype(int)
    fx, fy = xx - x0, yy - y0
    x1, y1 = np.minimum(x0 + 1, 5), np.minimum(y0 + 1, 5)
    tex = ((1 - fx) * (1 - fy) * coarse[y0, x0] + fx * (1 - fy) * coarse[y0, x1]
           + (1 - fx) * fy * coarse[y1, x0] + fx * fy * coarse[y1, x1])
    return 0.06 * tex


def render_face(p: FaceParams, size=64, rng=None, jitter=True):
    """Render one image of identity ``p``.

    Returns ``(FaceImage, landmarks (68, 2))``. With ``jitter`` the pose,
    lighting and noise vary per call according to ``rng``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if jitter:
        shift = rng.uniform(-0.03, 0.03, 2) * size
        scale = rng.uniform(0.96, 1.04)
        light = rng.uniform(0.9, 1.1)
        noise_sigma = 0.015
    else:
        shift, scale, light, noise_sigma = np.zeros(2), 1.0, 1.0, 0.0
    lm = face_landmarks(p, size, shift=shift, scale=scale)
    s = size * scale
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = (size - 1) / 2.0 + shift[0]
    cy = (size - 1) / 2.0 + 0.02 * size + shift[1]

    canvas = np.empty((size, size, 3))
    grad = (yy / max(size - 1, 1))[..., None]
    canvas[:] = np.asarray(p.background) * (1.0 - 0.25 * grad)
    canvas = _paint(canvas, _soft_ellipse(xx, yy, cx, cy - 0.06 * s, p.face_rx * s * 1.12, p.face_ry * s * 1.02), p.hair)
    face = _soft_ellipse(xx, yy, cx, cy, p.face_rx * s, p.face_ry * s)
    skin = np.asarray(p.skin) + _skin_texture(p, size)[..., None]
    canvas = canvas * (1.0 - face[..., None]) + face[..., None] * np.clip(skin, 0.0, 1.0)
    # fringe of hair over the forehead
    canvas = _paint(canvas, _soft_ellipse(xx, yy, cx, cy - p.face_ry * s * 0.95,
                                          p.face_rx * s * 0.95, p.face_ry * s * 0.28), p.hair)
    ey = cy + p.eye_y * s
    for side in (-1, 1):
        ex = cx + side * p.eye_dx * s
        canvas = _paint(canvas, _soft_ellipse(xx, yy, ex, ey - p.brow_lift * s - 0.006 * s,
                                              p.eye_rx * s * 1.3, 0.012 * s + 0.4), p.hair)
        canvas = _paint(canvas, _soft_ellipse(xx, yy, ex, ey, p.eye_rx * s, p.eye_ry * s), (0.95, 0.95, 0.95))
        canvas = _paint(canvas, _soft_ellipse(xx, yy, ex, ey, p.eye_ry * s, p.eye_ry * s), p.iris)
    nose_y = ey + (p.nose_len + 0.02) * s
    canvas = _paint(canvas, 0.35 * _soft_ellipse(xx, yy, cx, nose_y - 0.01 * s, p.nose_w * s, 0.02 * s + 0.5),
                    np.asarray(p.skin) * 0.6)
    my = cy + p.mouth_y * s
    canvas = _paint(canvas, _soft_ellipse(xx, yy, cx, my, p.mouth_w * s, p.mouth_h * s), p.lips)
    canvas = canvas * light
    if noise_sigma:
        canvas = canvas + rng.normal(0.0, noise_sigma, canvas.shape)
    return FaceImage.from_array(canvas), lm


def sprite_set(n, size=64, seed=1234):
    """``n`` jittered sprites of distinct random identities (toy-backend training data)."""
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(n):
        params = random_identity(rng)
        img, _ = render_face(params, size, rng=rng)
        images.append(img)
    return images


def write_synthetic_dataset(out_dir, n_identities=32, size=64, n_references=1, n_probes=2, seed=0):
    """Write PNGs, 68-point landmark files and a manifest for a synthetic population.

    Layout: ``images/<image_id>.png``, ``landmarks/<image_id>.json`` and
    ``manifest.json`` (paths relative to the manifest). Returns the manifest
    path.
    """
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    identities = []
    for k in range(n_identities):
        ident = f"id{k:03d}"
        params = random_identity(rng)
        images = []
        roles = ["reference"] * n_references + ["probe"] * n_probes
        counters = {"reference": 0, "probe": 0}
        for role in roles:
            image_id = f"{ident}_{'ref' if role == 'reference' else 'probe'}{counters[role]}"
            counters[role] += 1
            img, lm = render_face(params, size, rng=rng)
            save_image(img, out / "images" / f"{image_id}.png")
            save_landmarks(image_id, LandmarkSet(lm), out / "landmarks" / f"{image_id}.json")
            images.append({"id": image_id, "path": f"images/{image_id}.png", "role": role})
        identities.append({"id": ident, "images": images})
    manifest_path = out / "manifest.json"
    write_json(manifest_path, {"identities": identities})
    return manifest_path
