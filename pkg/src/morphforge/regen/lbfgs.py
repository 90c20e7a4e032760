"""Limited-memory BFGS with a decaying fixed step and patience-based stopping."""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import OptimizationError, ValidationError


@dataclass(frozen=True)
class FitOptions:
    """Optimizer settings; defaults follow the published encoder fine-tuning setup.

    ``decay_rate`` multiplies the step whenever a step fails to lower the
    loss, and ``early_stop_threshold`` is an absolute loss level in the
    perceptual backend's units.
    """

    learning_rate: float = 0.25
    decay_rate: float = 0.9
    early_stop_threshold: float = 0.5
    patience: int = 10
    max_iterations: int = 200
    history_size: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ValidationError("decay_rate must lie in (0, 1]")
        if self.patience < 0:
            raise ValidationError("patience must be non-negative")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be positive")
        if self.history_size < 1:
            raise ValidationError("history_size must be positive")

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return FitOptions(**values)


@dataclass
class LbfgsResult:
    x: np.ndarray
    loss: float
    trace: list = field(default_factory=list)
    iterations: int = 0
    evaluations: int = 0
    stop_reason: str = ""


def _check(loss, grad, where):
    if not np.isfinite(loss):
        raise OptimizationError(f"non-finite loss {loss!r} at {where}")
    if not np.all(np.isfinite(grad)):
        bad = int(np.count_nonzero(~np.isfinite(grad)))
        raise OptimizationError(f"non-finite gradient ({bad} components) at {where}")


def two_loop(grad, s_hist, y_hist):
    """Apply the implicit inverse-Hessian approximation to ``grad``."""
    q = grad.copy()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def lbfgs_minimize(objective, x0, opts: FitOptions = FitOptions()) -> LbfgsResult:
    """Minimise ``objective`` starting from ``x0``.

    Parameters
    ----------
    objective : callable
        ``objective(x) -> (loss, gradient)``.
    x0 : array_like
    opts : FitOptions

    Returns
    -------
    LbfgsResult
        Best iterate seen, its loss, and the trace of accepted losses (the
        initial loss first).

    Notes
    -----
    Each iteration tries ``x + step * d`` with ``d`` the L-BFGS direction.
    A step that lowers the loss is accepted and feeds the curvature memory;
    otherwise it is rejected and ``step`` is multiplied by ``decay_rate``.
    Stops when the loss drops below ``early_stop_threshold``, after
    ``patience`` consecutive rejected steps, or at ``max_iterations``.
    """
    x = np.array(x0, dtype=np.float64, copy=True).ravel()
    f, g = objective(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64).ravel()
    _check(f, g, "x0")
    result = LbfgsResult(x=x.copy(), loss=f, trace=[f], evaluations=1)
    if f < opts.early_stop_threshold:
        result.stop_reason = "threshold"
        return result

    s_hist = deque(maxlen=opts.history_size)
    y_hist = deque(maxlen=opts.history_size)
    step = opts.learning_rate
    fails = 0
    for it in range(1, opts.max_iterations + 1):
        result.iterations = it
        if s_hist:
            d = -two_loop(g, list(s_hist), list(y_hist))
            if float(d @ g) >= 0.0:
                # memory no longer yields descent: restart from steepest descent
                s_hist.clear()
                y_hist.clear()
        if not s_hist:
            gnorm = float(np.abs(g).sum())
            d = -g * min(1.0, 1.0 / gnorm) if gnorm > 0 else -g
        x_new = x + step * d
        f_new, g_new = objective(x_new)
        f_new = float(f_new)
        g_new = np.asarray(g_new, dtype=np.float64).ravel()
        result.evaluations += 1
        _check(f_new, g_new, f"iteration {it}")
        if f_new < f:
            s = x_new - x
            y = g_new - g
            sy = float(s @ y)
            if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))) and sy > 0:
                s_hist.append(s)
                y_hist.append(y)
            x, f, g = x_new, f_new, g_new
            result.trace.append(f)
            result.x, result.loss = x.copy(), f
            fails = 0
            if f < opts.early_stop_threshold:
                result.stop_reason = "threshold"
                return result
        else:
            step *= opts.decay_rate
            fails += 1
            if fails >= opts.patience:
                result.stop_reason = "patience"
                return result
    result.stop_reason = "max_iterations"
    return result
