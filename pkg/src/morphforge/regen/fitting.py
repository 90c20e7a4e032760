"""Latent fitting, encoder fine-tuning and the regeneration pipelines."""
import numpy as np

from ..errors import BackendError, ResizeRequiredError, ValidationError
from ..imaging import FaceImage, align_face, as_pixels, as_points, scale_landmarks
from ..lma_morph import interpolate_landmarks, morph_pair
from .lbfgs import FitOptions, lbfgs_minimize


def perceptual_loss(x, y, phi) -> float:
    """Mean squared difference of the two images' perceptual features."""
    fx = np.asarray(phi.features(x), dtype=np.float64)
    fy = np.asarray(phi.features(y), dtype=np.float64)
    if fx.shape != fy.shape:
        raise BackendError(f"feature length mismatch: {fx.shape} vs {fy.shape}")
    return float(np.mean((fx - fy) ** 2))


def _generate_array(gen, z):
    if hasattr(gen, "generate_array"):
        return gen.generate_array(z)
    return as_pixels(gen.generate(z))


def _differentiable(gen, phi):
    return hasattr(gen, "vjp") and hasattr(phi, "vjp")


def latent_objective(image, gen, phi, fd_step=1e-4):
    """``z -> (loss, grad)`` for ``perceptual_loss(image, gen(z))``.

    Uses the backends' vector-Jacobian products when both provide them and
    falls back to central finite differences otherwise.
    """
    target = np.asarray(phi.features(image), dtype=np.float64)
    n_feat = target.size

    def loss_only(z):
        return float(np.mean((np.asarray(phi.features(_generate_array(gen, z))) - target) ** 2))

    if _differentiable(gen, phi):
        def objective(z):
            pixels = _generate_array(gen, z)
            feats = np.asarray(phi.features(pixels), dtype=np.float64)
            resid = feats - target
            loss = float(np.mean(resid ** 2))
            g_pix = phi.vjp(pixels, (2.0 / n_feat) * resid)
            return loss, gen.vjp(z, g_pix)
        return objective

    def objective(z):
        z = np.asarray(z, dtype=np.float64)
        grad = np.empty_like(z)
        for i in range(z.size):
            e = np.zeros_like(z)
            e[i] = fd_step
            grad[i] = (loss_only(z + e) - loss_only(z - e)) / (2.0 * fd_step)
        return loss_only(z), grad
    return objective


def _check_size(image, size, what):
    h, w = as_pixels(image).shape[:2]
    if (w, h) != tuple(size):
        raise ResizeRequiredError(f"image is {w}x{h} but the {what} expects {size[0]}x{size[1]}; align/resize first")


def fit_latent(image, enc, gen, phi, opts: FitOptions = FitOptions()):
    """Find a latent whose generated image matches ``image`` perceptually.

    Starts from ``enc.encode(image)`` and refines with L-BFGS. Returns
    ``(latent, loss)``; the loss is never above the loss at the encoder's
    initial guess.
    """
    _check_size(image, gen.output_size, "generator")
    z0 = np.asarray(enc.encode(image), dtype=np.float64)
    if z0.shape != (gen.latent_dim,):
        raise ValidationError(f"encoder latent {z0.shape} does not fit generator dim {gen.latent_dim}")
    result = lbfgs_minimize(latent_objective(image, gen, phi), z0, opts)
    return result.x, result.loss


def finetune_encoder(enc, gen, phi, train_images, opts: FitOptions = FitOptions()):
    """Fit the encoder's trainable parameters with the generator frozen.

    Minimises the mean of ``perceptual_loss(img, gen(enc(img)))`` over the
    training images and returns a new encoder; ``enc`` and ``gen`` are left
    untouched.
    """
    images = list(train_images)
    if not images:
        raise ValidationError("finetune_encoder needs at least one training image")
    for im in images:
        _check_size(im, gen.output_size, "generator")
    if not _differentiable(gen, phi) or not hasattr(enc, "param_vjp"):
        raise ValidationError("encoder fine-tuning needs differentiable backends")
    objectives = [latent_objective(im, gen, phi) for im in images]

    def objective(params):
        candidate = enc.with_params(params)
        total, grad = 0.0, np.zeros_like(params)
        for im, obj in zip(images, objectives):
            loss, g_z = obj(candidate.encode(im))
            total += loss
            grad += candidate.param_vjp(im, g_z)
        return total / len(images), grad / len(images)

    result = lbfgs_minimize(objective, enc.params, opts)
    return enc.with_params(result.x)


def mean_reconstruction_loss(enc, gen, phi, images) -> float:
    return float(np.mean([perceptual_loss(im, _generate_array(gen, enc.encode(im)), phi) for im in images]))


def regenerate(image, enc, gen, phi, opts: FitOptions = FitOptions(), refine=True) -> FaceImage:
    """Re-generate ``image`` through the generator's latent space.

    With ``refine`` the encoder's latent is refined per image by
    :func:`fit_latent`; otherwise the encoder output is used directly.
    """
    _check_size(image, gen.output_size, "generator")
    if refine:
        z, _ = fit_latent(image, enc, gen, phi, opts)
    else:
        z = np.asarray(enc.encode(image), dtype=np.float64)
    return gen.generate(z)


def align_to_backend(image, landmarks, size, template=None):
    """Similarity-align ``image`` into the backend frame.

    Without a template this is a plain rescale of the landmark frame.
    """
    src = as_points(landmarks)
    h, w = as_pixels(image).shape[:2]
    if template is None:
        template = scale_landmarks(src, (w, h), size)
    aligned, _ = align_face(image, src, template, size)
    return aligned


def regen_morph(img_a, la, img_b, lb, alpha, backends, opts: FitOptions = FitOptions(),
                refine=True, template=None) -> FaceImage:
    """Landmark morph, align to the backend frame, then regenerate without latent edits."""
    morph = morph_pair(img_a, la, img_b, lb, alpha)
    lm = interpolate_landmarks(la, lb, alpha)
    aligned = align_to_backend(morph, lm, backends.generator.output_size, template)
    return regenerate(aligned, backends.encoder, backends.generator, backends.perceptual, opts, refine=refine)


def latent_interpolation_morph(img_a, img_b, alpha, backends, opts: FitOptions = FitOptions(),
                               refine=True) -> FaceImage:
    """Generate from the interpolated latents of the two (backend-sized) images."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    enc, gen, phi = backends.encoder, backends.generator, backends.perceptual
    latents = []
    for im in (img_a, img_b):
        _check_size(im, gen.output_size, "generator")
        if refine:
            latents.append(fit_latent(im, enc, gen, phi, opts)[0])
        else:
            latents.append(np.asarray(enc.encode(im), dtype=np.float64))
    if alpha == 0.0:
        z = latents[0]
    elif alpha == 1.0:
        z = latents[1]
    else:
        z = (1.0 - alpha) * latents[0] + alpha * latents[1]
    return gen.generate(z)
