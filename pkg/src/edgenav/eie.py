"""Environment encoding features: scene complexity and scene dynamics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ValidationError
from .navmodel import NavOutput


@dataclass(frozen=True)
class EieParams:
    """Weights on the collision-rate terms of the two features."""

    alpha: float = 0.3
    beta: float = 0.09

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError("alpha and beta must be non-negative")


class Dynamics(NamedTuple):
    value: float
    degenerate: bool


def complexity(high: NavOutput, low: NavOutput, params: EieParams = EieParams()) -> float:
    """Disagreement between the highest- and lowest-resolution outputs of one frame."""
    return abs(high.theta - low.theta) + params.alpha * abs(high.p - low.p)


def complexity_arrays(theta_high, p_high, theta_low, p_low, params: EieParams = EieParams()) -> np.ndarray:
    return np.abs(np.asarray(theta_high) - theta_low) + params.alpha * np.abs(np.asarray(p_high) - p_low)


def dynamics_arrays(theta: Sequence[float], p: Sequence[float], params: EieParams = EieParams()) -> Dynamics:
    # population standard deviation
    if len(theta) < 2:
        return Dynamics(0.0, True)
    return Dynamics(float(np.std(theta) + params.beta * np.std(p)), False)


def dynamics(window: Sequence[NavOutput], params: EieParams = EieParams()) -> Dynamics:
    """Spread of the outputs within the latest epoch; fewer than two outputs give 0."""
    return dynamics_arrays([o.theta for o in window], [o.p for o in window], params)
