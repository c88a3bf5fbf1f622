"""Pair-distance equality constraints and their 4-slot derivative blocks.

The same formulas serve distance requirements on deformed coordinates and
fixed-length constraints on design coordinates; only the variable binding
differs. Block slot order is ``(x_a, y_a, x_b, y_b)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EUCLIDEAN, SQUARED

# constant Hessian of the squared-distance form
SQUARED_HESSIAN = np.array(
    [[2.0, 0.0, -2.0, 0.0],
     [0.0, 2.0, 0.0, -2.0],
     [-2.0, 0.0, 2.0, 0.0],
     [0.0, -2.0, 0.0, 2.0]]
)
SQUARED_HESSIAN.flags.writeable = False


@dataclass(frozen=True)
class ConstraintEvaluation:
    value: float
    gradient_block: np.ndarray
    hessian_block: np.ndarray


def is_degenerate(d: float, target: float) -> bool:
    return d < 1e-12 * max(1.0, target)


def _delta(pa, pb) -> tuple[float, float]:
    return float(pb[0]) - float(pa[0]), float(pb[1]) - float(pa[1])


def _check(formulation: str) -> None:
    if formulation not in (EUCLIDEAN, SQUARED):
        raise ValueError(f"unknown formulation {formulation!r}")


def pair_constraint_value(pa, pb, target: float, formulation: str = EUCLIDEAN) -> float:
    _check(formulation)
    dx, dy = _delta(pa, pb)
    if formulation == SQUARED:
        return dx * dx + dy * dy - target * target
    return float(np.hypot(dx, dy)) - target


def pair_constraint_gradient(pa, pb, target: float, formulation: str = EUCLIDEAN) -> np.ndarray:
    _check(formulation)
    dx, dy = _delta(pa, pb)
    if formulation == SQUARED:
        return np.array([-2 * dx, -2 * dy, 2 * dx, 2 * dy])
    d = float(np.hypot(dx, dy))
    if is_degenerate(d, target):
        # direction undefined: borrow the squared-form gradient
        return np.array([-2 * dx, -2 * dy, 2 * dx, 2 * dy])
    lx, ly = dx / d, dy / d
    return np.array([-lx, -ly, lx, ly])


def distance_hessian_block(dx: float, dy: float, d: float) -> np.ndarray:
    """Second derivative of the plain Euclidean distance, for ``d > 0``."""
    lx, ly = dx / d, dy / d
    a = np.array([[1 - lx * lx, -lx * ly], [-lx * ly, 1 - ly * ly]]) / d
    return np.block([[a, -a], [-a, a]])


def pair_constraint_hessian(
    pa, pb, target: float, formulation: str = EUCLIDEAN, singular: str = "identity"
) -> np.ndarray:
    """4x4 Hessian block.

    ``singular`` chooses the substitute used when a Euclidean constraint sits
    at zero distance: ``"identity"`` or ``"squared"`` (the constant matrix of
    the squared form).
    """
    _check(formulation)
    if formulation == SQUARED:
        return SQUARED_HESSIAN.copy()
    dx, dy = _delta(pa, pb)
    d = float(np.hypot(dx, dy))
    if is_degenerate(d, target):
        return np.eye(4) if singular == "identity" else SQUARED_HESSIAN.copy()
    return distance_hessian_block(dx, dy, d)


def evaluate_pair(
    pa, pb, target: float, formulation: str = EUCLIDEAN, singular: str = "identity"
) -> ConstraintEvaluation:
    return ConstraintEvaluation(
        pair_constraint_value(pa, pb, target, formulation),
        pair_constraint_gradient(pa, pb, target, formulation),
        pair_constraint_hessian(pa, pb, target, formulation, singular),
    )
