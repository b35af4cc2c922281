"""Deterministic navigation oracle standing in for the steering CNN.

Predictions are the route's ground truth perturbed by a per-configuration bias
and noise.  Noise draws come from a counter-based hash keyed on
(seed, frame, resolution, compression), so any frame can be re-queried under
any configuration without storing a table, and a precomputed
:class:`NavTable` agrees bit-for-bit with point queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .traces import RouteTrace

RESOLUTIONS = (448, 224, 112)
COMPRESSIONS = (95, 60, 10)
LOSSLESS = 95  # local inference keys the profile at the uncompressed row

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NavOutput:
    theta: float
    p: float

    def __post_init__(self) -> None:
        if not (abs(self.theta) <= math.pi and 0.0 <= self.p <= 1.0):
            raise ValidationError(f"invalid navigation output theta={self.theta} p={self.p}")


def _default_noise() -> dict[tuple[int, int], float]:
    row448 = {95: 0.02, 60: 0.03, 10: 0.06}
    extra = {448: 0.0, 224: 0.03, 112: 0.08}
    return {(r, j): round(row448[j] + extra[r], 10) for r in RESOLUTIONS for j in COMPRESSIONS}


@dataclass(frozen=True)
class DegradationProfile:
    """Per-(resolution, compression) prediction error model.

    ``complexity_gain`` multiplies all noise scales by ``1 + gain * complexity``
    where ``complexity`` is the route's per-frame scene difficulty.
    """

    noise: dict[tuple[int, int], float] = field(default_factory=_default_noise)
    bias: dict[tuple[int, int], float] = field(default_factory=dict)
    p_noise: dict[tuple[int, int], float] | None = None
    complexity_gain: float = 3.0

    def __post_init__(self) -> None:
        noise = {(int(r), int(j)): float(v) for (r, j), v in self.noise.items()}
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "bias", {(int(r), int(j)): float(v) for (r, j), v in self.bias.items()})
        if self.p_noise is None:
            object.__setattr__(self, "p_noise", {k: v / 2.0 for k, v in noise.items()})
        self.validate()

    def keys(self) -> list[tuple[int, int]]:
        return sorted(self.noise, key=lambda k: (-k[0], -k[1]))

    def validate(self) -> None:
        if not self.noise:
            raise ValidationError("degradation profile is empty")
        if any(v < 0 for v in self.noise.values()) or any(v < 0 for v in self.p_noise.values()):
            raise ValidationError("noise scales must be non-negative")
        if set(self.p_noise) != set(self.noise) or not set(self.bias) <= set(self.noise):
            raise ValidationError("bias/p_noise keys must match the noise table")
        if self.complexity_gain < 0:
            raise ValidationError("complexity_gain must be non-negative")
        rs = sorted({r for r, _ in self.noise})
        js = sorted({j for _, j in self.noise})
        for r in rs:
            for j in js:
                if (r, j) not in self.noise:
                    raise ValidationError(f"missing noise entry for ({r}, {j})")
        for r_lo, r_hi in zip(rs, rs[1:]):
            for j in js:
                if self.noise[(r_hi, j)] > self.noise[(r_lo, j)]:
                    raise ValidationError("noise must be non-increasing in resolution")
        for r in rs:
            for j_lo, j_hi in zip(js, js[1:]):
                if self.noise[(r, j_hi)] > self.noise[(r, j_lo)]:
                    raise ValidationError("noise must be non-increasing in compression quality")
        best = (rs[-1], js[-1])
        if self.noise[best] != min(self.noise.values()):
            raise ValidationError("best configuration must carry the smallest noise")

    def key(self, r: int, j: int | None) -> tuple[int, int]:
        k = (int(r), LOSSLESS if j is None else int(j))
        if k not in self.noise:
            raise ValidationError(f"unknown configuration r={r} j={j}")
        return k


def zero_degradation() -> DegradationProfile:
    return DegradationProfile(noise={(r, j): 0.0 for r in RESOLUTIONS for j in COMPRESSIONS}, complexity_gain=0.0)


# ----------------------------------------------------------------------------
# counter-based randomness


def _mix(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def _uniform(seed: int, frames: np.ndarray, r: int, j: int, stream: int) -> np.ndarray:
    """Uniform draws in (0, 1), one per frame, from a splitmix64 hash chain."""
    with np.errstate(over="ignore"):
        h = _mix(np.array([(int(seed) & _MASK64)], dtype=np.uint64) + _GOLDEN)
        h = _mix(h ^ np.uint64(int(r) * 1_000_003 + int(j) * 7919 + stream))
        x = _mix(h + np.asarray(frames, dtype=np.uint64) * _GOLDEN)
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def standard_normals(seed: int, frames: np.ndarray, r: int, j: int, stream: int) -> np.ndarray:
    """Box-Muller normals keyed by (seed, frame, r, j); streams 0 and 1 are independent."""
    u1 = _uniform(seed, frames, r, j, 2 * stream)
    u2 = _uniform(seed, frames, r, j, 2 * stream + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _degrade(route: RouteTrace, frames: np.ndarray, key: tuple[int, int], profile: DegradationProfile, seed: int):
    r, j = key
    scale = 1.0 + profile.complexity_gain * route.complexity[frames]
    z_theta = standard_normals(seed, frames, r, j, 0)
    z_p = standard_normals(seed, frames, r, j, 1)
    theta = route.theta[frames] + profile.bias.get(key, 0.0) + z_theta * (profile.noise[key] * scale)
    p = route.p[frames] + z_p * (profile.p_noise[key] * scale)
    return np.clip(theta, -math.pi, math.pi), np.clip(p, 0.0, 1.0)


def infer(
    route: RouteTrace,
    t: float,
    r: int,
    j: int | None,
    seed: int,
    profile: DegradationProfile | None = None,
) -> NavOutput:
    """Model output for the frame nearest ``t`` under configuration (r, j).

    ``j=None`` means local (uncompressed) inference.
    """
    profile = profile or DegradationProfile()
    key = profile.key(r, j)
    k = route.frame_index(t)
    theta, p = _degrade(route, np.array([k]), key, profile, seed)
    return NavOutput(float(theta[0]), float(p[0]))


def ground_truth(route: RouteTrace, t: float) -> NavOutput:
    k = route.frame_index(t)
    return NavOutput(float(route.theta[k]), float(route.p[k]))


class NavTable:
    """Predictions for every frame under every configuration, computed once.

    This is the offline lookup table the simulator reads from; entries equal
    :func:`infer` exactly.
    """

    def __init__(self, route: RouteTrace, profile: DegradationProfile | None = None, seed: int = 0) -> None:
        self.route = route
        self.profile = profile or DegradationProfile()
        self.seed = int(seed)
        frames = np.arange(len(route))
        self.theta: dict[tuple[int, int], np.ndarray] = {}
        self.p: dict[tuple[int, int], np.ndarray] = {}
        for key in self.profile.keys():
            th, p = _degrade(route, frames, key, self.profile, self.seed)
            self.theta[key] = th
            self.p[key] = p
        # python lists for scalar access in the decision loop
        self.theta_list = {k: v.tolist() for k, v in self.theta.items()}
        self.p_list = {k: v.tolist() for k, v in self.p.items()}
        self.gt_theta_list = route.theta.tolist()

    def key(self, r: int, j: int | None) -> tuple[int, int]:
        return self.profile.key(r, j)

    def output(self, frame: int, r: int, j: int | None) -> NavOutput:
        key = self.key(r, j)
        return NavOutput(self.theta_list[key][frame], self.p_list[key][frame])
