"""Bandwidth and route traces: CSV ingestion, step-hold replay, and seeded synthesis."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import OutOfRangeError, TraceFormatError, ValidationError

BANDWIDTH_HEADER = ("time_s", "bandwidth_kbps")
ROUTE_HEADER = ("time_s", "theta_gt_rad", "p_gt")
ROUTE_HEADER_EXT = ROUTE_HEADER + ("complexity",)

DEFAULT_FRAME_PERIOD = 0.05
DEFAULT_MIN_KBPS = 50.0
DEFAULT_MAX_KBPS = 54000.0


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BandwidthTrace:
    """Measured throughput samples, replayed with step-hold semantics."""

    times: np.ndarray
    kbps: np.ndarray
    name: str = "bandwidth"

    def __post_init__(self) -> None:
        times = _frozen(self.times)
        kbps = _frozen(self.kbps)
        if times.ndim != 1 or times.shape != kbps.shape:
            raise ValidationError("times and bandwidth must be 1-D arrays of equal length")
        if times.size == 0:
            raise ValidationError("bandwidth trace is empty")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(kbps)):
            raise ValidationError("bandwidth trace contains non-finite values")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("bandwidth trace times must be strictly increasing")
        if np.any(kbps <= 0):
            raise ValidationError("bandwidth samples must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "kbps", kbps)
        # plain lists make the per-decision lookup in the simulator cheap
        object.__setattr__(self, "_times_list", times.tolist())
        object.__setattr__(self, "_kbps_list", kbps.tolist())

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def max_kbps(self) -> float:
        return float(self.kbps.max())

    def at(self, t: float) -> float:
        i = bisect.bisect_right(self._times_list, t) - 1
        if i < 0:
            raise OutOfRangeError(f"t={t} precedes first bandwidth sample at {self._times_list[0]}")
        return self._kbps_list[i]


def sample_bandwidth(trace: BandwidthTrace, t: float) -> float:
    """Bandwidth (kbps) of the latest sample at or before ``t``; the last value holds forever."""
    return trace.at(t)


@dataclass(frozen=True, eq=False)
class RouteTrace:
    """Ground-truth navigation outputs on a uniform frame grid.

    ``complexity`` is a per-frame scene difficulty in [0, 1] that scales the
    navigation oracle's noise; routes loaded without that column get zeros.
    """

    times: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    frame_period: float = DEFAULT_FRAME_PERIOD
    name: str = "route"
    complexity: np.ndarray | None = None

    def __post_init__(self) -> None:
        times = _frozen(self.times)
        theta = _frozen(self.theta)
        p = _frozen(self.p)
        cx = _frozen(np.zeros_like(times) if self.complexity is None else self.complexity)
        n = times.size
        if n == 0:
            raise ValidationError("route trace is empty")
        if not (theta.shape == p.shape == cx.shape == times.shape):
            raise ValidationError("route columns must have equal length")
        fp = float(self.frame_period)
        if not fp > 0:
            raise ValidationError("frame_period must be positive")
        if n > 1:
            expected = times[0] + fp * np.arange(n)
            if np.max(np.abs(times - expected)) > 1e-6 * max(1.0, fp * n):
                raise ValidationError("route frames must be uniformly spaced at frame_period")
        if not np.all(np.isfinite(theta)) or np.any(np.abs(theta) > math.pi):
            raise ValidationError("theta_gt must lie in [-pi, pi]")
        if not np.all(np.isfinite(p)) or np.any((p < 0) | (p > 1)):
            raise ValidationError("p_gt must lie in [0, 1]")
        if np.any((cx < 0) | (cx > 1)):
            raise ValidationError("complexity must lie in [0, 1]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "complexity", cx)
        object.__setattr__(self, "frame_period", fp)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return self.end - self.start

    def contains(self, t: float) -> bool:
        return self.start - 1e-9 <= t <= self.end + 1e-9

    def frame_index(self, t: float) -> int:
        """Index of the frame nearest to ``t`` (midpoints resolve to the later frame)."""
        if not self.contains(t):
            raise OutOfRangeError(f"t={t} outside route [{self.start}, {self.end}]")
        k = int(math.floor((t - self.start) / self.frame_period + 0.5))
        return min(max(k, 0), len(self) - 1)


# ----------------------------------------------------------------------------
# CSV I/O


def _read_rows(path: Path, header: Sequence[str], optional: Sequence[str] = ()):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TraceFormatError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ValidationError(f"{path}: empty trace file")
    got = [h.strip() for h in lines[0].split(",")]
    allowed = [list(header), list(header) + list(optional)]
    if got not in allowed:
        raise TraceFormatError(f"expected header {','.join(header)}, got {lines[0]!r}", line=1)
    rows = []
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(got):
            raise TraceFormatError(f"expected {len(got)} fields, got {len(row)}", line=lineno)
        try:
            rows.append([float(c) for c in row])
        except ValueError:
            raise TraceFormatError(f"non-numeric field in {row!r}", line=lineno) from None
    if not rows:
        raise ValidationError(f"{path}: trace has no samples")
    return got, np.array(rows, dtype=float)


def load_bandwidth_trace(path: str | Path, name: str | None = None) -> BandwidthTrace:
    """Read a ``time_s,bandwidth_kbps`` CSV."""
    path = Path(path)
    _, data = _read_rows(path, BANDWIDTH_HEADER)
    return BandwidthTrace(data[:, 0], data[:, 1], name=name or path.stem)


def save_bandwidth_trace(trace: BandwidthTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BANDWIDTH_HEADER)
        for t, b in zip(trace.times.tolist(), trace.kbps.tolist()):
            w.writerow((repr(t), repr(b)))


def load_route_trace(path: str | Path, name: str | None = None) -> RouteTrace:
    """Read a ``time_s,theta_gt_rad,p_gt[,complexity]`` CSV."""
    path = Path(path)
    header, data = _read_rows(path, ROUTE_HEADER, optional=("complexity",))
    times = data[:, 0]
    if times.size > 1:
        fp = float(np.median(np.diff(times)))
    else:
        fp = DEFAULT_FRAME_PERIOD
    cx = data[:, 3] if len(header) == 4 else None
    return RouteTrace(times, data[:, 1], data[:, 2], frame_period=fp, name=name or path.stem, complexity=cx)


def save_route_trace(route: RouteTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROUTE_HEADER_EXT)
        cols = (route.times.tolist(), route.theta.tolist(), route.p.tolist(), route.complexity.tolist())
        for row in zip(*cols):
            w.writerow([repr(v) for v in row])


# ----------------------------------------------------------------------------
# synthetic routes

SEGMENT_KINDS = ("straight", "turn", "curve")


@dataclass(frozen=True)
class Segment:
    """One piece of a synthetic route.

    ``turn`` ramps the steering angle to ``turn_magnitude`` and back as a half
    sine; ``curve`` traces one full sine period of amplitude ``turn_magnitude``.
    ``scene`` is the scene difficulty attached to every frame of the segment.
    """

    kind: str
    length: float
    turn_magnitude: float = 0.0
    scene: float = 0.0


@dataclass(frozen=True)
class RouteSpec:
    duration: float
    segments: tuple[Segment, ...]
    noise_scale: float = 0.0
    seed: int = 0
    frame_period: float = DEFAULT_FRAME_PERIOD
    p_floor: float = 0.05
    p_turn: float = 0.6
    name: str = "route"

    def validate(self) -> None:
        if not self.duration > 0:
            raise ValidationError("route duration must be positive")
        if not self.segments:
            raise ValidationError("route needs at least one segment")
        for seg in self.segments:
            if seg.kind not in SEGMENT_KINDS:
                raise ValidationError(f"unknown segment kind {seg.kind!r}")
            if not seg.length > 0:
                raise ValidationError("segment lengths must be positive")
            if abs(seg.turn_magnitude) > math.pi:
                raise ValidationError("turn_magnitude must lie in [-pi, pi]")
            if not 0.0 <= seg.scene <= 1.0:
                raise ValidationError("segment scene difficulty must lie in [0, 1]")
        total = sum(seg.length for seg in self.segments)
        if abs(total - self.duration) > 1e-6 * max(1.0, self.duration):
            raise ValidationError(f"segment lengths sum to {total}, expected {self.duration}")
        if self.noise_scale < 0:
            raise ValidationError("noise_scale must be non-negative")
        if not self.frame_period > 0:
            raise ValidationError("frame_period must be positive")
        if not 0.0 <= self.p_floor <= self.p_turn <= 1.0:
            raise ValidationError("need 0 <= p_floor <= p_turn <= 1")


def generate_route(spec: RouteSpec) -> RouteTrace:
    """Piecewise steering ground truth with seeded noise; pure in ``spec``."""
    spec.validate()
    n = int(round(spec.duration / spec.frame_period)) + 1
    times = spec.frame_period * np.arange(n)
    base = np.zeros(n)
    scene = np.zeros(n)
    start = 0.0
    for seg in spec.segments:
        stop = start + seg.length
        last = seg is spec.segments[-1]
        mask = (times >= start) & ((times <= stop) if last else (times < stop))
        u = (times[mask] - start) / seg.length
        if seg.kind == "turn":
            base[mask] = seg.turn_magnitude * np.sin(np.pi * u)
        elif seg.kind == "curve":
            base[mask] = seg.turn_magnitude * np.sin(2.0 * np.pi * u)
        scene[mask] = seg.scene
        start = stop
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, 1.0, n) * spec.noise_scale
    theta = np.clip(base + noise, -math.pi, math.pi)
    # collision rate rises with steering magnitude, saturating at a right angle
    p = spec.p_floor + (spec.p_turn - spec.p_floor) * np.minimum(1.0, np.abs(theta) / (math.pi / 2))
    p = np.clip(p, 0.0, 1.0)
    return RouteTrace(times, theta, p, frame_period=spec.frame_period, name=spec.name, complexity=scene)


# ----------------------------------------------------------------------------
# synthetic bandwidth

BANDWIDTH_KINDS = ("markov-levels", "random-walk")


@dataclass(frozen=True)
class BandwidthParams:
    """Parameters for :func:`generate_bandwidth`.

    markov-levels uses ``levels``, ``switch_prob``, ``jitter`` and
    ``initial_level``; random-walk uses ``initial`` and ``step`` (kbps std
    per sample).  Every value is clamped into ``[min_kbps, max_kbps]``.
    """

    duration: float = 600.0
    period: float = 1.0
    min_kbps: float = DEFAULT_MIN_KBPS
    max_kbps: float = DEFAULT_MAX_KBPS
    levels: tuple[float, ...] = (1000.0,)
    switch_prob: float = 0.05
    jitter: float = 0.0
    initial_level: int = 0
    initial: float = 1000.0
    step: float = 0.0
    name: str = "bandwidth"

    def validate(self, kind: str) -> None:
        if kind not in BANDWIDTH_KINDS:
            raise ValidationError(f"unknown bandwidth kind {kind!r}")
        if not self.duration > 0 or not self.period > 0:
            raise ValidationError("duration and period must be positive")
        if not 0 < self.min_kbps < self.max_kbps:
            raise ValidationError("need 0 < min_kbps < max_kbps")
        if kind == "markov-levels":
            if not self.levels or any(v <= 0 for v in self.levels):
                raise ValidationError("levels must be a non-empty list of positive kbps")
            if not 0.0 <= self.switch_prob <= 1.0:
                raise ValidationError("switch_prob must lie in [0, 1]")
            if self.jitter < 0:
                raise ValidationError("jitter must be non-negative")
            if not 0 <= self.initial_level < len(self.levels):
                raise ValidationError("initial_level out of range")
        else:
            if not self.initial > 0 or self.step < 0:
                raise ValidationError("random-walk needs initial > 0 and step >= 0")


def generate_bandwidth(kind: str, params: BandwidthParams, seed: int) -> BandwidthTrace:
    """Seeded synthetic throughput trace sampled every ``params.period`` seconds."""
    params.validate(kind)
    n = max(1, int(round(params.duration / params.period)))
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    if kind == "markov-levels":
        levels = np.asarray(params.levels, dtype=float)
        idx = params.initial_level
        for k in range(n):
            if k > 0 and len(levels) > 1 and rng.random() < params.switch_prob:
                others = [i for i in range(len(levels)) if i != idx]
                idx = others[int(rng.integers(len(others)))]
            out[k] = levels[idx]
        if params.jitter > 0:
            out = out * (1.0 + params.jitter * rng.normal(0.0, 1.0, n))
    else:
        x = params.initial
        for k in range(n):
            if k > 0 and params.step > 0:
                x = x + params.step * rng.normal()
                x = min(max(x, params.min_kbps), params.max_kbps)
            out[k] = x
    out = np.clip(out, params.min_kbps, params.max_kbps)
    times = params.period * np.arange(n)
    return BandwidthTrace(times, out, name=params.name)
