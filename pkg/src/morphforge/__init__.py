"""Face morphing attack generation and evaluation toolkit.

Subpackages and modules:

``protocol``
    dataset manifests and identity-disjoint split protocols
``imaging``
    face images, landmarks, alignment and PNG I/O
``lma_morph``
    landmark-based morphing (Delaunay mesh plus piecewise-affine warp)
``regen``
    latent-space regeneration of morphs through pluggable generator backends
``frs_vuln``
    face recognition vulnerability metrics (MMPMR, FMMPMR)
``mad``
    morphing attack detection and its error rates
``cli``
    the ``morphforge`` command
"""
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
