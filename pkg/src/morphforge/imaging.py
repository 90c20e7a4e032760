"""Image and landmark types, PNG I/O, bilinear sampling and similarity alignment."""
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import _kernels
from ._io import atomic_write_bytes, write_json
from .errors import AlignmentError, ImageError, LandmarkError, SamplingError

MIN_SIDE = 8
N_FACE_LANDMARKS = 68
N_BORDER_ANCHORS = 8
COINCIDENT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FaceImage:
    """A 3-channel image with float pixels in [0, 1], shape (height, width, 3).

    The pixel buffer is copied on construction and made read-only.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ImageError(f"expected (H, W, 3) pixels, got shape {arr.shape}")
        if arr.shape[0] < MIN_SIDE or arr.shape[1] < MIN_SIDE:
            raise ImageError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {arr.shape[1]}x{arr.shape[0]}")
        if not np.all(np.isfinite(arr)):
            raise ImageError("non-finite pixel values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ImageError("pixel values outside [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_array(cls, arr, clip=True):
        """Build from any float array, clipping round-off excursions by default."""
        arr = np.asarray(arr, dtype=np.float64)
        if clip:
            arr = np.clip(arr, 0.0, 1.0)
        return cls(arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def size(self):
        return (self.width, self.height)

    def to_uint8(self) -> np.ndarray:
        return np.round(self.pixels * 255.0).astype(np.uint8)

    def quantized(self) -> "FaceImage":
        """The image as it would read back after an 8-bit round trip."""
        return FaceImage(self.to_uint8() / 255.0)

    def __eq__(self, other):
        if not isinstance(other, FaceImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """Ordered 2-D control points, shape (N, 2), as (x, y) pixel coordinates."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise LandmarkError(f"expected (N, 2) points, got shape {pts.shape}")
        if len(pts) < 3:
            raise LandmarkError("a landmark set needs at least 3 points")
        if not np.all(np.isfinite(pts)):
            raise LandmarkError("non-finite landmark coordinates")
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= COINCIDENT_TOL:
            i, j = np.unravel_index(np.argmin(dist), dist.shape)
            raise LandmarkError(f"landmarks {min(i, j)} and {max(i, j)} coincide")
        if all_collinear(pts):
            raise LandmarkError("all landmarks are collinear")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return bool(np.array_equal(self.points, other.points))

    __hash__ = None


def all_collinear(points, tol=1e-12) -> bool:
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        return True
    centred = pts - pts.mean(axis=0)
    scale = np.abs(centred).max()
    if scale == 0.0:
        return True
    sv = np.linalg.svd(centred / scale, compute_uv=False)
    return bool(sv[1] <= tol * max(sv[0], 1.0) * len(pts))


def as_points(landmarks) -> np.ndarray:
    if isinstance(landmarks, LandmarkSet):
        return landmarks.points
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise LandmarkError(f"expected (N, 2) points, got shape {pts.shape}")
    return pts


def as_pixels(image) -> np.ndarray:
    if isinstance(image, FaceImage):
        return image.pixels
    return np.asarray(image, dtype=np.float64)


# --- I/O -------------------------------------------------------------------

def load_image(path) -> FaceImage:
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise ImageError(f"{path}: unsupported format {img.format!r}, only PNG is accepted")
            img.load()
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except ImageError:
        raise
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageError(f"{path}: cannot decode PNG ({exc})") from exc
    return FaceImage(rgb / 255.0)


def encode_png(image: FaceImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.to_uint8(), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_image(image: FaceImage, path) -> Path:
    return atomic_write_bytes(path, encode_png(image))


def border_anchors(width, height) -> np.ndarray:
    """Four corners then four edge midpoints of a ``width`` x ``height`` frame."""
    x1, y1 = width - 1.0, height - 1.0
    xm, ym = x1 / 2.0, y1 / 2.0
    return np.array([[0.0, 0.0], [x1, 0.0], [x1, y1], [0.0, y1],
                     [xm, 0.0], [x1, ym], [xm, y1], [0.0, ym]])


def with_border_anchors(landmarks, width, height) -> LandmarkSet:
    """Append the 8 border anchors to a 68-point set; 76-point sets pass through."""
    pts = as_points(landmarks)
    if len(pts) == N_FACE_LANDMARKS + N_BORDER_ANCHORS:
        return LandmarkSet(pts)
    if len(pts) != N_FACE_LANDMARKS:
        raise LandmarkError(f"expected {N_FACE_LANDMARKS} facial landmarks, got {len(pts)}")
    return LandmarkSet(np.vstack([pts, border_anchors(width, height)]))


def load_landmarks(path):
    """Read a landmark file; returns ``(image_id, LandmarkSet)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise LandmarkError(f"{path}: cannot read landmark file ({exc})") from exc
    if not isinstance(doc, dict) or set(doc) != {"image_id", "points"}:
        raise LandmarkError(f"{path}: landmark file must have exactly the keys image_id, points")
    if not isinstance(doc["image_id"], str) or not doc["image_id"]:
        raise LandmarkError(f"{path}: image_id must be a non-empty string")
    pts = np.asarray(doc["points"], dtype=np.float64)
    if len(pts) not in (N_FACE_LANDMARKS, N_FACE_LANDMARKS + N_BORDER_ANCHORS):
        raise LandmarkError(f"{path}: expected 68 or 76 points, got {len(pts)}")
    return doc["image_id"], LandmarkSet(pts)


def save_landmarks(image_id, landmarks, path) -> Path:
    pts = as_points(landmarks)
    return write_json(path, {"image_id": image_id, "points": pts.tolist()})


# --- sampling and geometry ---------------------------------------------------

def bilinear_sample(image, x, y):
    """Bilinearly interpolate ``image`` at real coordinates ``(x, y)``.

    ``image`` may be a :class:`FaceImage` or an array of shape (H, W) or
    (H, W, C). Coordinates must lie in ``[0, W-1] x [0, H-1]``; clamping is
    the caller's job.
    """
    arr = as_pixels(image)
    h, w = arr.shape[:2]
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise SamplingError(f"({x}, {y}) outside [0, {w - 1}] x [0, {h - 1}]")
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    return ((1.0 - fx) * (1.0 - fy) * arr[y0, x0] + fx * (1.0 - fy) * arr[y0, x1]
            + (1.0 - fx) * fy * arr[y1, x0] + fx * fy * arr[y1, x1])


def similarity_transform(src, dst) -> np.ndarray:
    """Least-squares rotation + uniform scale + translation taking src to dst.

    Returns the 2x3 matrix ``M`` with ``dst ~= M @ [x, y, 1]``.
    """
    src = as_points(src)
    dst = as_points(dst)
    if src.shape != dst.shape or len(src) < 2:
        raise AlignmentError("alignment needs two point sets of equal size >= 2")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    s, d = src - mu_s, dst - mu_d
    norm = (s ** 2).sum()
    if norm <= COINCIDENT_TOL ** 2:
        raise AlignmentError("source landmarks are all coincident")
    a = (s[:, 0] * d[:, 0] + s[:, 1] * d[:, 1]).sum() / norm
    b = (s[:, 0] * d[:, 1] - s[:, 1] * d[:, 0]).sum() / norm
    if a * a + b * b <= 1e-24:
        raise AlignmentError("degenerate alignment: target landmarks are all coincident")
    rot = np.array([[a, -b], [b, a]])
    t = mu_d - rot @ mu_s
    return np.hstack([rot, t[:, None]])


def invert_affine(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    lin = m[:, :2]
    det = np.linalg.det(lin)
    if abs(det) < 1e-15:
        raise AlignmentError("affine transform is not invertible")
    inv = np.linalg.inv(lin)
    return np.hstack([inv, (-inv @ m[:, 2])[:, None]])


def apply_affine(matrix, points) -> np.ndarray:
    pts = as_points(points)
    m = np.asarray(matrix, dtype=np.float64)
    return pts @ m[:, :2].T + m[:, 2]


def _out_shape(out_size):
    if np.isscalar(out_size):
        return int(out_size), int(out_size)
    w, h = out_size
    return int(w), int(h)


def warp_image(image, matrix, out_size) -> FaceImage:
    """Resample ``image`` through the forward (source -> output) affine ``matrix``."""
    out_w, out_h = _out_shape(out_size)
    inv = invert_affine(matrix)
    pixels = _kernels.warp_affine(as_pixels(image), inv, out_h, out_w)
    return FaceImage.from_array(pixels)


def align_face(image, landmarks, template, out_size):
    """Align a face to template landmarks with a similarity transform.

    Parameters
    ----------
    image : FaceImage
    landmarks : LandmarkSet or array (N, 2)
        Landmarks of ``image``.
    template : LandmarkSet or array (N, 2)
        Target positions in the output frame.
    out_size : int or (width, height)

    Returns
    -------
    (FaceImage, LandmarkSet)
        The warped image (zero outside the source) and the transformed
        landmarks.
    """
    src = as_points(landmarks)
    dst = as_points(template)
    matrix = similarity_transform(src, dst)
    warped = warp_image(image, matrix, out_size)
    return warped, LandmarkSet(apply_affine(matrix, src))


def resize_image(image, out_size) -> FaceImage:
    """Bilinear resize mapping corner pixel centres onto corner pixel centres."""
    arr = as_pixels(image)
    h, w = arr.shape[:2]
    out_w, out_h = _out_shape(out_size)
    if (out_w, out_h) == (w, h):
        return image if isinstance(image, FaceImage) else FaceImage(arr)
    sx = (w - 1) / (out_w - 1)
    sy = (h - 1) / (out_h - 1)
    inv = np.array([[sx, 0.0, 0.0], [0.0, sy, 0.0]])
    return FaceImage.from_array(_kernels.warp_affine(arr, inv, out_h, out_w))


def scale_landmarks(landmarks, from_size, to_size) -> np.ndarray:
    """Rescale landmark coordinates consistently with :func:`resize_image`."""
    fw, fh = _out_shape(from_size)
    tw, th = _out_shape(to_size)
    pts = as_points(landmarks)
    return pts * np.array([(tw - 1) / (fw - 1), (th - 1) / (fh - 1)])
