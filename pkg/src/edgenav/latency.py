"""End-to-end latency model: onboard compute, edge compute vs. granted cores, and transmission."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

from .errors import ServiceUnavailableError, ValidationError

LOCAL_448_SECONDS = 0.709
EDGE_SPEEDUP_1_TO_10 = 26.5


def _default_local() -> dict[int, float]:
    return {448: LOCAL_448_SECONDS, 224: 0.21, 112: 0.07}


def _default_edge() -> tuple[tuple[float, ...], dict[int, tuple[float, ...]]]:
    anchors = (1.0, 2.0, 4.0, 8.0, 10.0)
    t1 = 0.53
    row448 = (t1, 0.27, 0.12, 0.045, t1 / EDGE_SPEEDUP_1_TO_10)
    local = _default_local()
    rows = {r: tuple(v * local[r] / local[448] for v in row448) for r in local}
    rows[448] = row448
    return anchors, rows


def _default_payload() -> dict[tuple[int, int], float]:
    return {
        (448, 95): 110.0, (448, 60): 45.0, (448, 10): 12.0,
        (224, 95): 30.0, (224, 60): 13.0, (224, 10): 4.0,
        (112, 95): 9.0, (112, 60): 4.0, (112, 10): 1.5,
    }


@dataclass(frozen=True)
class LatencyProfile:
    """Latency tables.

    Parameters
    ----------
    local_compute : dict
        Resolution -> onboard inference seconds.
    edge_cores : tuple
        Core counts at which ``edge_compute`` is tabulated (ascending).
    edge_compute : dict
        Resolution -> tuple of edge inference seconds, one per anchor.
    payload_kb : dict
        (resolution, compression) -> transmitted image size in kilobytes.
    fixed_overhead : float
        Capture plus control-message return, seconds.
    propagation : float
        Per-message network propagation constant, seconds.
    """

    local_compute: dict[int, float] = field(default_factory=_default_local)
    edge_cores: tuple[float, ...] = field(default_factory=lambda: _default_edge()[0])
    edge_compute: dict[int, tuple[float, ...]] = field(default_factory=lambda: _default_edge()[1])
    payload_kb: dict[tuple[int, int], float] = field(default_factory=_default_payload)
    fixed_overhead: float = 0.01
    propagation: float = 0.005

    def __post_init__(self) -> None:
        object.__setattr__(self, "local_compute", {int(k): float(v) for k, v in self.local_compute.items()})
        object.__setattr__(self, "edge_cores", tuple(float(c) for c in self.edge_cores))
        object.__setattr__(
            self, "edge_compute", {int(k): tuple(float(x) for x in v) for k, v in self.edge_compute.items()}
        )
        object.__setattr__(
            self, "payload_kb", {(int(r), int(j)): float(v) for (r, j), v in self.payload_kb.items()}
        )
        self.validate()

    def validate(self) -> None:
        vals = list(self.local_compute.values()) + list(self.payload_kb.values())
        vals += [x for row in self.edge_compute.values() for x in row]
        if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise ValidationError("latency table entries must be positive and finite")
        if self.fixed_overhead < 0 or self.propagation < 0:
            raise ValidationError("overheads must be non-negative")
        cores = self.edge_cores
        if not cores or cores[0] <= 0 or any(b <= a for a, b in zip(cores, cores[1:])):
            raise ValidationError("edge core anchors must be positive and strictly increasing")
        for r, row in self.edge_compute.items():
            if len(row) != len(cores):
                raise ValidationError(f"edge row for r={r} has wrong length")
            if any(b > a for a, b in zip(row, row[1:])):
                raise ValidationError("edge compute must be non-increasing in cores")
        rs = sorted(self.local_compute)
        if any(self.local_compute[b] < self.local_compute[a] for a, b in zip(rs, rs[1:])):
            raise ValidationError("local compute must be non-decreasing in resolution")
        pr = sorted({r for r, _ in self.payload_kb})
        pj = sorted({j for _, j in self.payload_kb})
        for r in pr:
            for a, b in zip(pj, pj[1:]):
                if (r, a) in self.payload_kb and (r, b) in self.payload_kb:
                    if self.payload_kb[(r, b)] < self.payload_kb[(r, a)]:
                        raise ValidationError("payload must be non-decreasing in compression quality")
        for j in pj:
            for a, b in zip(pr, pr[1:]):
                if (a, j) in self.payload_kb and (b, j) in self.payload_kb:
                    if self.payload_kb[(b, j)] < self.payload_kb[(a, j)]:
                        raise ValidationError("payload must be non-decreasing in resolution")


def local_latency(profile: LatencyProfile, r: int) -> float:
    try:
        return profile.local_compute[int(r)] + profile.fixed_overhead
    except KeyError:
        raise ValidationError(f"no local latency for resolution {r}") from None


def edge_compute_latency(profile: LatencyProfile, r: int, cores: float) -> float:
    """Edge inference time with ``cores`` (fractional) CPU cores.

    Between anchors, log(latency) is interpolated linearly in cores.  Past the
    last anchor the curve is flat; below the first anchor latency scales as
    1/cores (a CPU quota slows a fixed workload proportionally).
    """
    if not cores > 0:
        raise ValidationError(f"cores must be positive, got {cores}")
    try:
        row = profile.edge_compute[int(r)]
    except KeyError:
        raise ValidationError(f"no edge latency for resolution {r}") from None
    anchors = profile.edge_cores
    if cores >= anchors[-1]:
        return row[-1]
    if cores <= anchors[0]:
        return row[0] * anchors[0] / cores
    i = bisect.bisect_left(anchors, cores)
    if anchors[i] == cores:
        return row[i]
    c0, c1 = anchors[i - 1], anchors[i]
    w = (cores - c0) / (c1 - c0)
    return math.exp((1.0 - w) * math.log(row[i - 1]) + w * math.log(row[i]))


def transmit_latency(profile: LatencyProfile, r: int, j: int, bandwidth: float) -> float:
    if not bandwidth > 0:
        raise ValidationError(f"bandwidth must be positive, got {bandwidth}")
    try:
        size = profile.payload_kb[(int(r), int(j))]
    except KeyError:
        raise ValidationError(f"no payload size for r={r} j={j}") from None
    return size * 8.0 / bandwidth + profile.propagation


def end_to_end(profile: LatencyProfile, action, bandwidth: float, cores: float) -> float:
    """Capture-to-command latency of one decision under ``action``."""
    if not action.offload:
        return local_latency(profile, action.r)
    if not cores > 0:
        raise ServiceUnavailableError("offload requested with no edge cores granted")
    return (
        transmit_latency(profile, action.r, action.j, bandwidth)
        + edge_compute_latency(profile, action.r, cores)
        + profile.fixed_overhead
    )


def zero_latency_profile() -> LatencyProfile:
    """Profile whose every latency is (numerically) zero, for perfect-oracle checks."""
    tiny = 1e-12
    anchors, rows = _default_edge()
    return LatencyProfile(
        local_compute={r: tiny for r in _default_local()},
        edge_cores=anchors,
        edge_compute={r: tuple(tiny for _ in anchors) for r in rows},
        payload_kb={k: tiny for k in _default_payload()},
        fixed_overhead=0.0,
        propagation=0.0,
    )
