"""Generator, encoder and perceptual backends.

The toy backends are small, deterministic and differentiable so that every
regeneration contract can be exercised without pretrained weights:

* :class:`ToyGenerator` - ``sigmoid(W2 @ tanh(W1 @ z + b1) + b2)``, fitted in
  closed form (PCA in logit space) to a procedural face-sprite set.
* :class:`ToyEncoder` - the generator's linear mirror with a trainable
  per-dimension affine head.
* :class:`ConvPerceptual` - three fixed random 3x3/stride-2 tanh convolutions.

Heavyweight models plug in through :mod:`morphforge.regen.tensorio`.
"""
import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol, runtime_checkable

import numpy as np

from ..errors import BackendError
from ..imaging import FaceImage, as_pixels

PUBLISHED_LATENT_DIM = 512
PUBLISHED_IMAGE_SIZE = 1024
# Scales toy feature MSE so typical morph losses sit around the 0.5
# early-stop level instead of ~1e-3.
TOY_FEATURE_GAIN = 16.0


@runtime_checkable
class GeneratorBackend(Protocol):
    latent_dim: int
    output_size: tuple

    def generate(self, z) -> FaceImage: ...

    def digest(self) -> str: ...


@runtime_checkable
class EncoderBackend(Protocol):
    latent_dim: int
    input_size: tuple

    def encode(self, image) -> np.ndarray: ...


@runtime_checkable
class PerceptualBackend(Protocol):
    def features(self, image) -> np.ndarray: ...


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _logit(x, eps=0.01):
    x = np.clip(x, eps, 1.0 - eps)
    return np.log(x) - np.log1p(-x)


# --- generators -------------------------------------------------------------

class ToyGenerator:
    """Two-layer decoder ``sigmoid(W2 @ tanh(W1 @ z + b1) + b2)``."""

    def __init__(self, w1, b1, w2, b2, size):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        for a in (self.w1, self.b1, self.w2, self.b2):
            a.setflags(write=False)
        self.latent_dim = self.w1.shape[1]
        self.output_size = (int(size), int(size))
        if self.w2.shape[0] != size * size * 3:
            raise BackendError("decoder output does not match the declared image size")

    def generate_array(self, z):
        h = np.tanh(self.w1 @ np.asarray(z, dtype=np.float64) + self.b1)
        x = _sigmoid(self.w2 @ h + self.b2)
        w, hgt = self.output_size
        return x.reshape(hgt, w, 3)

    def generate(self, z) -> FaceImage:
        return FaceImage.from_array(self.generate_array(z))

    def vjp(self, z, grad_pixels):
        """Gradient w.r.t. ``z`` of ``<grad_pixels, generate(z)>``."""
        a = self.w1 @ np.asarray(z, dtype=np.float64) + self.b1
        h = np.tanh(a)
        x = _sigmoid(self.w2 @ h + self.b2)
        g_o = np.asarray(grad_pixels, dtype=np.float64).ravel() * x * (1.0 - x)
        g_a = (self.w2.T @ g_o) * (1.0 - h * h)
        return self.w1.T @ g_a

    def digest(self) -> str:
        return _digest(self.w1, self.b1, self.w2, self.b2)


class LinearGenerator:
    """``base + W @ z``: a linear decoder for convex test problems.

    Raises when a latent drives pixels out of [0, 1].
    """

    def __init__(self, weight, base, size):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.base = np.asarray(base, dtype=np.float64).ravel()
        self.weight.setflags(write=False)
        self.base.setflags(write=False)
        self.latent_dim = self.weight.shape[1]
        self.output_size = (int(size), int(size))

    @classmethod
    def random(cls, latent_dim, size, seed=0, spread=0.05):
        rng = np.random.default_rng(seed)
        p = size * size * 3
        weight = rng.normal(0.0, spread / np.sqrt(latent_dim), (p, latent_dim))
        return cls(weight, np.full(p, 0.5), size)

    def generate_array(self, z):
        w, h = self.output_size
        return (self.base + self.weight @ np.asarray(z, dtype=np.float64)).reshape(h, w, 3)

    def generate(self, z) -> FaceImage:
        return FaceImage(self.generate_array(z))

    def vjp(self, z, grad_pixels):
        return self.weight.T @ np.asarray(grad_pixels, dtype=np.float64).ravel()

    def digest(self) -> str:
        return _digest(self.weight, self.base)


# --- encoders ---------------------------------------------------------------

class ToyEncoder:
    """``z = scale * (P @ (logit(x) - mu)) + shift`` with trainable scale/shift."""

    def __init__(self, projection, mean_logit, size, scale=None, shift=None):
        self.projection = np.asarray(projection, dtype=np.float64)
        self.mean_logit = np.asarray(mean_logit, dtype=np.float64)
        self.projection.setflags(write=False)
        self.mean_logit.setflags(write=False)
        self.latent_dim = self.projection.shape[0]
        self.input_size = (int(size), int(size))
        self.scale = np.ones(self.latent_dim) if scale is None else np.array(scale, dtype=np.float64)
        self.shift = np.zeros(self.latent_dim) if shift is None else np.array(shift, dtype=np.float64)
        self.scale.setflags(write=False)
        self.shift.setflags(write=False)

    def project(self, image):
        return self.projection @ (_logit(as_pixels(image).ravel()) - self.mean_logit)

    def encode(self, image):
        return self.scale * self.project(image) + self.shift

    @property
    def params(self):
        return np.concatenate([self.scale, self.shift])

    def with_params(self, params):
        params = np.asarray(params, dtype=np.float64)
        n = self.latent_dim
        return ToyEncoder(self.projection, self.mean_logit, self.input_size[0], params[:n], params[n:])

    def param_vjp(self, image, grad_z):
        """Gradient w.r.t. ``params`` of ``<grad_z, encode(image)>``."""
        return np.concatenate([grad_z * self.project(image), grad_z])

    def digest(self) -> str:
        return _digest(self.projection, self.mean_logit, self.scale, self.shift)


class FixedEncoder:
    """Returns a stored latent for every image; handy for planted-solution tests."""

    def __init__(self, latent, size):
        self.latent = np.asarray(latent, dtype=np.float64)
        self.latent_dim = len(self.latent)
        self.input_size = (int(size), int(size))

    def encode(self, image):
        return self.latent.copy()


# --- perceptual features ------------------------------------------------------

def _conv_forward(x, w, b):
    # x (C, H, W); w (O, C, 3, 3); stride 2, zero padding 1
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::2, ::2]
    return np.einsum("ockl,chwkl->ohw", w, win, optimize=True) + b[:, None, None]


def _conv_backward(grad_out, w, in_shape):
    c, h, wd = in_shape
    ho, wo = grad_out.shape[1:]
    gxp = np.zeros((c, h + 2, wd + 2))
    for k in range(3):
        for l in range(3):
            gxp[:, k:k + 2 * ho:2, l:l + 2 * wo:2] += np.einsum("oc,ohw->chw", w[:, :, k, l], grad_out)
    return gxp[:, 1:h + 1, 1:wd + 1]


class ConvPerceptual:
    """Fixed-seed random convolution stack with tanh activations.

    Features are the flattened output of the last layer times ``gain``.
    """

    def __init__(self, channels=(3, 8, 16, 16), seed=7, gain=1.0):
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for cin, cout in zip(channels[:-1], channels[1:]):
            w = rng.normal(0.0, 1.0 / np.sqrt(cin * 9), (cout, cin, 3, 3)) * 1.5
            b = rng.normal(0.0, 0.1, cout)
            w.setflags(write=False)
            b.setflags(write=False)
            self.weights.append(w)
            self.biases.append(b)
        self.gain = float(gain)

    def _forward(self, pixels):
        x = np.transpose(np.asarray(pixels, dtype=np.float64), (2, 0, 1)) - 0.5
        acts = [x]
        for w, b in zip(self.weights, self.biases):
            x = np.tanh(_conv_forward(x, w, b))
            acts.append(x)
        return acts

    def features(self, image):
        return self.gain * self._forward(as_pixels(image))[-1].ravel()

    def vjp(self, image, grad_features):
        """Gradient w.r.t. pixels (H, W, 3) of ``<grad_features, features(image)>``."""
        acts = self._forward(as_pixels(image))
        g = self.gain * np.asarray(grad_features, dtype=np.float64).reshape(acts[-1].shape)
        for layer in range(len(self.weights) - 1, -1, -1):
            y = acts[layer + 1]
            g = _conv_backward(g * (1.0 - y * y), self.weights[layer], acts[layer].shape)
        return np.transpose(g, (1, 2, 0))

    def digest(self) -> str:
        return _digest(*self.weights, *self.biases, np.array([self.gain]))


class PixelPerceptual:
    """Identity features (raw pixels); makes latent fitting a least-squares problem."""

    def features(self, image):
        return as_pixels(image).ravel().astype(np.float64)

    def vjp(self, image, grad_features):
        return np.asarray(grad_features, dtype=np.float64).reshape(as_pixels(image).shape)


# --- bundle + reference construction -----------------------------------------

@dataclass(frozen=True)
class RegenBackends:
    encoder: object
    generator: object
    perceptual: object

    @property
    def size(self):
        return self.generator.output_size


def fit_toy_autoencoder(images, latent_dim=PUBLISHED_LATENT_DIM, squash=0.5, seed=0):
    """Closed-form (PCA in logit space) fit of the toy decoder and its mirror encoder.

    The leading principal directions carry the sprite variation with unit
    latent variance; remaining latent dimensions get small random directions
    so every coordinate influences the output.
    """
    arrs = np.stack([as_pixels(im).ravel() for im in images])
    size = as_pixels(images[0]).shape[0]
    logits = _logit(arrs)
    mu = logits.mean(axis=0)
    centred = logits - mu
    _, sv, vt = np.linalg.svd(centred, full_matrices=False)
    n = len(images)
    k = min(latent_dim, n - 1, int(np.sum(sv > 1e-8 * sv[0])))
    sd = sv[:k] / np.sqrt(n - 1)
    p = arrs.shape[1]
    basis = np.zeros((p, latent_dim))
    basis[:, :k] = vt[:k].T * sd
    if latent_dim > k:
        rng = np.random.default_rng(seed)
        extra = rng.normal(size=(p, latent_dim - k))
        extra -= vt[:k].T @ (vt[:k] @ extra)
        extra /= np.linalg.norm(extra, axis=0)
        basis[:, k:] = extra * (0.25 * sd[-1])
    w1 = squash * np.eye(latent_dim)
    w2 = basis / squash
    gen = ToyGenerator(w1, np.zeros(latent_dim), w2, mu, size)
    enc = ToyEncoder(np.linalg.pinv(basis), mu, size)
    return gen, enc


@lru_cache(maxsize=8)
def toy_backends(size=64, latent_dim=PUBLISHED_LATENT_DIM, n_sprites=256, seed=1234, feature_gain=TOY_FEATURE_GAIN):
    """Reference desk-scale backends, deterministic for fixed arguments."""
    from ..synthetic import sprite_set

    sprites = sprite_set(n_sprites, size=size, seed=seed)
    gen, enc = fit_toy_autoencoder(sprites, latent_dim=latent_dim, seed=seed)
    return RegenBackends(enc, gen, ConvPerceptual(seed=seed + 1, gain=feature_gain))
