"""Quality-of-Navigation, the velocity law, and flight-distance accounting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import UndefinedMetricError, ValidationError

DEFAULT_EPSILON = 0.13
DEFAULT_TAU = 5.0


@dataclass(frozen=True)
class DecisionRecord:
    t_capture: float
    t_decide: float
    theta_pre: float
    theta_gt: float
    p_pre: float
    action: object = None

    def __post_init__(self) -> None:
        if self.t_decide < self.t_capture:
            raise ValidationError("a decision cannot land before its capture")

    @property
    def latency(self) -> float:
        return self.t_decide - self.t_capture

    @property
    def error(self) -> float:
        return abs(self.theta_pre - self.theta_gt)


@dataclass(frozen=True)
class QoNWindow:
    records: tuple[DecisionRecord, ...]
    epsilon: float = DEFAULT_EPSILON
    tau: float = DEFAULT_TAU

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")


def qon_from_errors(errors: Iterable[float], epsilon: float) -> float:
    """Share of decisions whose steering error is within ``epsilon`` (inclusive)."""
    errs = np.asarray(list(errors) if not isinstance(errors, np.ndarray) else errors, dtype=float)
    if errs.size == 0:
        raise UndefinedMetricError("QoN is undefined over a window with no decisions")
    return float(np.count_nonzero(errs <= epsilon)) / errs.size


def qon(window: QoNWindow) -> float:
    """QoN of a window; the denominator is the number of decisions actually made."""
    return qon_from_errors([r.error for r in window.records], window.epsilon)


def velocity(p: float, v_max: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"collision rate must lie in [0, 1], got {p}")
    if not v_max > 0:
        raise ValidationError("v_max must be positive")
    return v_max * (1.0 - p)


@dataclass(frozen=True)
class CrashRule:
    """Proxy for route deviation: ``k`` consecutive errors above ``epsilon_crash``."""

    epsilon_crash: float = 0.5
    k: int = 3

    def __post_init__(self) -> None:
        if not self.epsilon_crash > 0 or self.k < 1:
            raise ValidationError("crash rule needs epsilon_crash > 0 and k >= 1")


def crash_index(errors: Sequence[float], rule: CrashRule) -> int | None:
    """Index of the decision at which the crash rule fires, or None."""
    run = 0
    for i, e in enumerate(errors):
        run = run + 1 if e > rule.epsilon_crash else 0
        if run >= rule.k:
            return i
    return None


def flight_distance(
    records: Sequence[DecisionRecord],
    v_max: float,
    crash_rule: CrashRule | None = None,
) -> float:
    """Meters flown before the first crash.

    Command i holds from its arrival until the next arrival.  The final
    command's hold is taken as its own capture-to-arrival time, which is the
    loop period of a closed control loop.
    """
    if not records:
        return 0.0
    stop = len(records)
    if crash_rule is not None:
        hit = crash_index([r.error for r in records], crash_rule)
        if hit is not None:
            stop = hit
    dist = 0.0
    for i in range(stop):
        rec = records[i]
        if i + 1 < len(records):
            dt = records[i + 1].t_decide - rec.t_decide
        else:
            dt = rec.t_decide - rec.t_capture
        dist += velocity(rec.p_pre, v_max) * dt
    return dist
