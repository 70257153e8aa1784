"""Picard iteration for strict contractions with a-priori/a-posteriori certificates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from .errors import NotContractionError
from .grid import GridFunction
from .operators import antiderivative

log = logging.getLogger(__name__)

Step = Callable[[GridFunction], GridFunction]
Norm = Callable[[GridFunction], float]

#: consecutive ratios above 1 (after the warm-up) that abort an iteration
DIVERGENCE_RUN = 5
DIVERGENCE_WARMUP = 3


def _check_lip(lip: float):
    if not 0 <= lip < 1:
        raise NotContractionError(f"Lipschitz constant {lip} is not in [0, 1)")


def a_priori_bound(lip: float, n: int, d0: float) -> float:
    """``lip^n d0 / (1 - lip)``: distance of the n-th iterate to the fixed point.

    ``d0`` is the first step length ``|x1 - x0|`` (or any bound on the initial error).
    """
    _check_lip(lip)
    return lip**n * d0 / (1.0 - lip)


def a_posteriori_bound(lip: float, d_last: float) -> float:
    """``lip d_last / (1 - lip)`` with ``d_last`` the last step length."""
    _check_lip(lip)
    return lip * d_last / (1.0 - lip)


def perturbation_bound(lip_f: float, lip_g: float, sup_diff: float) -> float:
    """Distance between fixed points of two maps differing by at most ``sup_diff``."""
    mean = 0.5 * (lip_f + lip_g)
    if not 0 <= mean < 1:
        raise NotContractionError(f"mean Lipschitz constant {mean} is not in [0, 1)")
    return sup_diff / (1.0 - mean)


@dataclass
class FixedPointTrace:
    """Record of one Picard run; ``distances[k]`` is ``|x_{k+1} - x_k|``."""

    lipschitz: float
    distances: list[float] = field(default_factory=list)
    reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> list[float]:
        d = self.distances
        return [d[k + 1] / d[k] for k in range(len(d) - 1) if d[k] > 0]

    @property
    def certificate(self) -> float:
        """A-posteriori distance of the returned iterate to the exact fixed point."""
        if not self.distances:
            return float("inf")
        return a_posteriori_bound(self.lipschitz, self.distances[-1])


def fixed_point(
    step: Step,
    norm: Norm,
    lip: float,
    x0: GridFunction,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> tuple[GridFunction, FixedPointTrace]:
    """Iterate ``x <- step(x)`` until the a-posteriori bound drops below ``tol``.

    Stops with reason ``"tolerance"``, ``"max_iter"``, or ``"divergence"`` (step
    ratios above 1 on ``DIVERGENCE_RUN`` consecutive steps after the warm-up,
    which means the declared ``lip`` is wrong).
    """
    _check_lip(lip)
    if tol <= 0 and max_iter < 1:
        raise ValueError("need a positive tolerance or a finite iteration budget")
    trace = FixedPointTrace(lip)
    x = x0
    above = 0
    for k in range(max_iter):
        nxt = step(x)
        d = norm(nxt - x)
        trace.distances.append(d)
        x = nxt
        if d == 0.0 or a_posteriori_bound(lip, d) <= tol:
            trace.reason = "tolerance"
            return x, trace
        if k >= DIVERGENCE_WARMUP and trace.distances[-2] > 0 and d > trace.distances[-2]:
            above += 1
            if above >= DIVERGENCE_RUN:
                trace.reason = "divergence"
                log.warning("Picard iteration diverging at step %d (|dx|=%.3e)", k + 1, d)
                return x, trace
        else:
            above = 0
    trace.reason = "max_iter"
    return x, trace


def lifted_fixed_point(
    step_on_derivative: Step,
    norm: Norm,
    lip: float,
    w0: GridFunction,
    tol: float = 1e-10,
    max_iter: int = 500,
    offset: GridFunction | None = None,
) -> tuple[GridFunction, GridFunction, FixedPointTrace]:
    """Solve for the derivative ``w`` and recover ``x = antiderivative(w) + offset``.

    This is the route for right-hand sides that are contractions on the
    once-differentiated level (neutral equations).
    """
    w, trace = fixed_point(step_on_derivative, norm, lip, w0, tol, max_iter)
    x = antiderivative(w)
    if offset is not None:
        x = x + offset
    return x, w, trace
