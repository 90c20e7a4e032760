"""Latent-space regeneration of landmark morphs."""
from .backends import (ConvPerceptual, FixedEncoder, LinearGenerator, PixelPerceptual, RegenBackends,
                       ToyEncoder, ToyGenerator, toy_backends)
from .fitting import (align_to_backend, finetune_encoder, fit_latent, latent_interpolation_morph,
                      latent_objective, mean_reconstruction_loss, perceptual_loss, regen_morph, regenerate)
from .lbfgs import FitOptions, LbfgsResult, lbfgs_minimize

__all__ = [
    "ConvPerceptual", "FixedEncoder", "LinearGenerator", "PixelPerceptual", "RegenBackends",
    "ToyEncoder", "ToyGenerator", "toy_backends", "align_to_backend", "finetune_encoder", "fit_latent",
    "latent_interpolation_morph", "latent_objective", "mean_reconstruction_loss", "perceptual_loss",
    "regen_morph", "regenerate", "FitOptions", "LbfgsResult", "lbfgs_minimize",
]
