"""Generic solver for ``x = y + B(x, x)`` with ``B`` bilinear and bounded.

Elements only need ``+``, ``-`` and a norm supplied by the caller, so the same
iteration serves scalars, arrays and whole space-time trajectories.

If ``||B(a, b)|| <= eta ||a|| ||b||`` and ``4 eta ||y|| < 1``, the map
``x -> y + B(x, x)`` sends the ball of radius
``R = (1 - sqrt(1 - 4 eta ||y||)) / (2 eta)`` into itself and contracts there
with factor ``2 eta R``. Uniqueness in fact extends to the larger ball of
radius ``1/(2 eta)``; that refinement is not certified here.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import OutOfRegimeError

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e8


def default_norm(x: Any) -> float:
    """Absolute value for scalars, Euclidean norm for arrays."""
    return float(np.linalg.norm(np.ravel(np.asarray(x))))


@dataclass
class BilinearFixedPointProblem:
    """One instance of ``x = y + B(x, x)``.

    ``eta`` may be ``None`` when no bound is known; the radius is then
    reported as nan.
    """

    y: Any
    bilinear: Callable[[Any, Any], Any]
    eta: Optional[float] = 1.0
    tol: float = 1e-12
    max_iter: int = 500
    norm: Callable[[Any], float] = default_norm

    def __post_init__(self) -> None:
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass
class FixedPointResult:
    solution: Any
    iterations: int
    residual: float
    radius_bound: float
    converged: bool
    residual_history: list[float] = field(default_factory=list)
    iterate_norms: list[float] = field(default_factory=list)
    diverged: bool = False


def radius_bound(eta: float, y_norm: float) -> float:
    """Radius ``R`` of the invariant ball.

    Evaluated as ``2 y / (1 + sqrt(1 - 4 eta y))``, which equals the textbook
    expression but keeps full precision when ``eta y`` is tiny.

    Raises:
        OutOfRegimeError: when ``4 eta y_norm > 1``.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if y_norm < 0:
        raise ValueError("y_norm must be nonnegative")
    disc = 1.0 - 4.0 * eta * y_norm
    if disc < 0:
        raise OutOfRegimeError(f"4*eta*||y|| = {4 * eta * y_norm:.6g} exceeds 1")
    return 2.0 * y_norm / (1.0 + math.sqrt(disc))


def solve_fixed_point(p: BilinearFixedPointProblem) -> FixedPointResult:
    """Picard iteration ``x_0 = y``, ``x_{m+1} = y + B(x_m, x_m)``.

    The reported residual of ``x_m`` is ``||x_{m+1} - x_m||``, i.e. exactly
    ``||x_m - y - B(x_m, x_m)||``. Iteration stops at the first iterate whose
    residual is at most ``tol``, on exhaustion of ``max_iter``, or when the
    iterates blow up or stop being finite.
    """
    y_norm = p.norm(p.y)
    if p.eta is None:
        R = float("nan")
    else:
        try:
            R = radius_bound(p.eta, y_norm)
        except OutOfRegimeError:
            R = float("nan")
            logger.info("fixed-point problem outside the small-data regime",
                        extra={"diagnostic": {"eta": p.eta, "y_norm": y_norm}})
    cap = DIVERGENCE_FACTOR * max(1.0, y_norm, 0.0 if math.isnan(R) else R)

    x = p.y
    norms = [y_norm]
    history: list[float] = []
    for m in range(int(p.max_iter)):
        nxt = p.y + p.bilinear(x, x)
        res = p.norm(nxt - x)
        history.append(res)
        if not math.isfinite(res):
            return FixedPointResult(x, m, res, R, False, history, norms, diverged=True)
        if res <= p.tol:
            return FixedPointResult(x, m + 1, res, R, True, history, norms)
        x = nxt
        xn = p.norm(x)
        norms.append(xn)
        if not math.isfinite(xn) or xn > cap:
            return FixedPointResult(x, m + 1, res, R, False, history, norms, diverged=True)
    return FixedPointResult(x, int(p.max_iter), history[-1], R, False, history, norms)


def estimate_eta(
    bilinear: Callable[[Any, Any], Any],
    sampler: Callable[[], Any],
    trials: int,
    norm: Callable[[Any], float] = default_norm,
) -> float:
    """Largest observed ``||B(a, b)|| / (||a|| ||b||)`` over ``trials`` sampled pairs.

    Pairs with a zero factor are skipped. Returns 0 if every pair is skipped.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    best = 0.0
    for _ in range(trials):
        a, b = sampler(), sampler()
        na, nb = norm(a), norm(b)
        if na == 0.0 or nb == 0.0:
            logger.debug("degenerate eta sample skipped")
            continue
        best = max(best, norm(bilinear(a, b)) / (na * nb))
    return best
