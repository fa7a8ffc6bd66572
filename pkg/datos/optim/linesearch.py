# optim/linesearch.py
import math
from dataclasses import dataclass

import numpy as np

from app.exceptions import ConfigurationError, NonterminationError
from optim.problems import SmoothLocalLoss

ALPHA_FLOOR = 1e-300
RELATIVE_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class LineSearchResult:
    alpha: float
    trials: int
    candidate: np.ndarray


def decrease_gap(f: SmoothLocalLoss, x1: np.ndarray, f1: float, g1: np.ndarray, x_plus: np.ndarray, alpha: float, delta: float) -> float:
    """
    RHS - LHS of f(x+) <= f(x1) + <g1, x+ - x1> + delta/(2 alpha) ||x+ - x1||^2.

    Nonnegative when the sufficient-decrease condition holds; -inf off the domain.
    """
    value = f.value(x_plus)
    if not math.isfinite(value):
        return -math.inf
    step = x_plus - x1
    return f1 + float(g1 @ step) + delta / (2.0 * alpha) * float(step @ step) - value


def linesearch(
    alpha_in: float,
    f: SmoothLocalLoss,
    x1: np.ndarray,
    x2: np.ndarray,
    d: np.ndarray,
    delta: float,
) -> LineSearchResult:
    """
    Backtracking from alpha_in: halve alpha until x+ = x2 + alpha d satisfies the
    sufficient-decrease condition measured at x1.
    """
    if not alpha_in > 0:
        raise ConfigurationError(f"initial stepsize must be positive, got {alpha_in}")
    if not (0.0 < delta <= 1.0):
        raise ConfigurationError(f"delta must lie in (0, 1], got {delta}")

    f1 = f.value(x1)
    if not math.isfinite(f1):
        raise ConfigurationError("line-search base point lies outside the loss domain")
    g1 = f.gradient(x1)
    slack = RELATIVE_SLACK * (1.0 + abs(f1))

    alpha = float(alpha_in)
    trials = 1
    while True:
        candidate = x2 + alpha * d
        if decrease_gap(f, x1, f1, g1, candidate, alpha, delta) >= -slack:
            return LineSearchResult(alpha=alpha, trials=trials, candidate=candidate)
        alpha /= 2.0
        trials += 1
        if alpha < ALPHA_FLOOR:
            raise NonterminationError(
                f"line-search stepsize fell below {ALPHA_FLOOR:g} after {trials - 1} halvings; "
                "the loss is not convex and smooth along this segment"
            )
