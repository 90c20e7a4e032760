"""Exception hierarchy.

Everything raised on purpose derives from :class:`MorphforgeError`. The CLI
maps :class:`ValidationError` subclasses to exit code 1 and everything else
to exit code 2.
"""


class MorphforgeError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(MorphforgeError, ValueError):
    """Input data violates a documented invariant or precondition."""


class MalformedManifestError(ValidationError):
    pass


class ProtocolInfeasibleError(ValidationError):
    pass


class ProtocolError(ValidationError):
    """Evaluation protocol broken, e.g. a probe that was also a morph source."""


class ImageError(ValidationError):
    pass


class LandmarkError(ValidationError):
    pass


class SamplingError(ValidationError):
    pass


class AlignmentError(ValidationError):
    pass


class TriangulationError(ValidationError):
    pass


class SingularSystemError(ValidationError):
    pass


class ResizeRequiredError(ValidationError):
    pass


class OptimizationError(MorphforgeError):
    """Objective produced a non-finite loss or gradient."""


class BackendError(MorphforgeError):
    pass


class TrainingError(MorphforgeError):
    pass


class ReportError(ValidationError):
    pass
