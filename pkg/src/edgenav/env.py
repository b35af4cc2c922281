"""Closed-loop navigation simulator exposing an episodic scheduling interface.

Each scheduler step holds one configuration for a window of ``tau`` seconds
while the drone runs its capture -> infer -> act loop one decision at a time:
the prediction comes from the frame at capture time, the ground truth from the
frame at arrival time, and the next capture happens when the previous decision
lands.  The step reward is the window's QoN.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, TextIO, Union

import numpy as np

from .actions import Action, decode_action
from .eie import EieParams, complexity_arrays, dynamics_arrays
from .errors import ContractViolation, ValidationError
from .latency import LatencyProfile, edge_compute_latency, local_latency
from .metrics import CrashRule, DecisionRecord
from .navmodel import DegradationProfile, NavTable
from .traces import BandwidthTrace, RouteTrace

RECORD_HEADER = ("t_capture", "t_decide", "theta_pre", "theta_gt", "p_pre", "action", "latency")


@dataclass(frozen=True)
class CoreGrant:
    """Edge cores actually granted vs. what the drone is told it holds."""

    granted: float
    observed: float


CoresProvider = Callable[[int, float], Union[float, CoreGrant]]


@dataclass(frozen=True)
class NormCaps:
    """Divisors mapping the raw state into [0, 1]; ``b_max=None`` uses the trace maximum."""

    c_cap: float = 1.0
    d_cap: float = 0.5
    b_max: float | None = None
    s_max: float = 12.0


@dataclass
class SimConfig:
    route: RouteTrace
    bandwidth: BandwidthTrace
    latency_profile: LatencyProfile = field(default_factory=LatencyProfile)
    degradation: DegradationProfile = field(default_factory=DegradationProfile)
    eie: EieParams = field(default_factory=EieParams)
    epsilon: float = 0.13
    tau: float = 5.0
    v_max: float = 3.0
    episode_length: float = 100.0
    seed: int = 0
    edge_cores: float = 4.0
    edge_cores_provider: CoresProvider | None = None
    crash_rule: CrashRule = field(default_factory=CrashRule)
    route_offset: float = 0.0
    bandwidth_offset: float = 0.0
    forced_latency: float | None = None
    norm: NormCaps = field(default_factory=NormCaps)
    nav_table: NavTable | None = None
    min_decision_interval: float | None = None
    record_sink: TextIO | None = None

    def validate(self) -> None:
        if not self.tau > 0 or not self.episode_length > 0:
            raise ValidationError("tau and episode_length must be positive")
        steps = self.episode_length / self.tau
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValidationError("tau must divide episode_length")
        if not self.epsilon > 0 or not self.v_max > 0:
            raise ValidationError("epsilon and v_max must be positive")
        if self.edge_cores < 0:
            raise ValidationError("edge_cores must be non-negative")
        if not self.route.contains(self.route.start + self.route_offset):
            raise ValidationError("route_offset lies outside the route")
        if self.forced_latency is not None and self.forced_latency < 0:
            raise ValidationError("forced_latency must be non-negative")
        if self.nav_table is not None and self.nav_table.route is not self.route:
            raise ValidationError("nav_table was built for a different route")
        if self.min_decision_interval is not None and not self.min_decision_interval > 0:
            raise ValidationError("min_decision_interval must be positive")
        caps = self.norm
        if not (caps.c_cap > 0 and caps.d_cap > 0 and caps.s_max > 0) or (caps.b_max is not None and caps.b_max <= 0):
            raise ValidationError("normalization caps must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.episode_length / self.tau))


@dataclass(frozen=True)
class SchedulerState:
    """Observation: EIE features (c, d), bandwidth, cores, plus the raw last output."""

    c: float
    d: float
    b: float
    s: float
    theta: float = 0.0
    p: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.c, self.d, self.b, self.s, self.theta, self.p)):
            raise ValidationError("scheduler state must be finite")


def observe_normalized(state: SchedulerState, caps: NormCaps, eie: bool = True, b_max: float | None = None) -> np.ndarray:
    """4-vector in [0, 1]: (c, d, b, s) with EIE, (theta, p, b, s) without."""
    b_cap = caps.b_max if caps.b_max is not None else b_max
    if b_cap is None:
        raise ValidationError("no bandwidth cap configured")
    if eie:
        first, second = state.c / caps.c_cap, state.d / caps.d_cap
    else:
        first, second = (state.theta / math.pi + 1.0) / 2.0, state.p
    vec = np.array([first, second, state.b / b_cap, state.s / caps.s_max], dtype=float)
    return np.clip(vec, 0.0, 1.0)


@dataclass(frozen=True)
class StepInfo:
    decisions: int
    mean_latency: float
    distance: float
    crashed: bool
    qon: float
    start: float
    end: float
    offload_time: float
    busy_time: float
    granted_cores: float
    observed_cores: float
    executed: str
    records: tuple[DecisionRecord, ...] = ()


@dataclass(frozen=True)
class StepResult:
    state: SchedulerState
    reward: float
    done: bool
    info: StepInfo


@dataclass(frozen=True)
class EpisodeSummary:
    qon: float
    qon_flown: float
    mean_latency: float
    distance: float
    offload_ratio: float
    crashed: bool
    decisions: int
    steps: int
    elapsed: float


class NavigationEnv:
    """Single-drone environment.  Not thread-safe; one instance per drone."""

    def __init__(self, config: SimConfig) -> None:
        config.validate()
        self.config = config
        self.table = config.nav_table or NavTable(config.route, config.degradation, config.seed)
        prof = self.table.profile
        rs = sorted({r for r, _ in prof.noise})
        self._hi = prof.key(rs[-1], None)
        self._lo = prof.key(rs[0], None)
        c_frames = complexity_arrays(
            self.table.theta[self._hi], self.table.p[self._hi],
            self.table.theta[self._lo], self.table.p[self._lo], config.eie,
        )
        self._c_frames = c_frames
        self._c_cum = np.concatenate([[0.0], np.cumsum(c_frames)])
        self._b_max = config.norm.b_max if config.norm.b_max is not None else config.bandwidth.max_kbps
        self._min_interval = config.min_decision_interval or config.route.frame_period
        self._writer = csv.writer(config.record_sink, lineterminator="\n") if config.record_sink else None
        if self._writer is not None:
            self._writer.writerow(RECORD_HEADER)
        self._started = False
        self.done = True

    # ------------------------------------------------------------------ state

    def _grant(self, step_index: int) -> CoreGrant:
        cfg = self.config
        if cfg.edge_cores_provider is None:
            return CoreGrant(cfg.edge_cores, cfg.edge_cores)
        g = cfg.edge_cores_provider(step_index, self.clock)
        if isinstance(g, CoreGrant):
            return g
        return CoreGrant(float(g), float(g))

    def _frame(self, t: float) -> int:
        route = self.config.route
        k = int(math.floor((self.config.route_offset + t) / route.frame_period + 0.5))
        return k

    def _window_c(self, t0: float, t1: float) -> float:
        k0 = min(self._frame(t0), self._n_frames - 1)
        k1 = min(self._frame(t1), self._n_frames - 1)
        if k1 < k0:
            k1 = k0
        return float((self._c_cum[k1 + 1] - self._c_cum[k0]) / (k1 - k0 + 1))

    def _build_state(self, c: float, d: float) -> SchedulerState:
        grant = self._grant(self.step_index)
        b = self.config.bandwidth.at(self.config.bandwidth_offset + self.clock)
        return SchedulerState(c, d, b, grant.observed, self._last_theta, self._last_p)

    @property
    def b_max(self) -> float:
        return self._b_max

    def refresh_state(self) -> SchedulerState:
        """Re-read bandwidth and cores for the upcoming step (after an allocation epoch)."""
        self.state = self._build_state(self.state.c, self.state.d)
        return self.state

    def observe_normalized(self, state: SchedulerState | None = None, eie: bool = True) -> np.ndarray:
        return observe_normalized(state or self.state, self.config.norm, eie, self._b_max)

    # --------------------------------------------------------------- episode

    def reset(self) -> SchedulerState:
        cfg = self.config
        self._n_frames = len(cfg.route)
        self.clock = 0.0
        self.step_index = 0
        self.done = False
        self.crashed = False
        self._started = True
        self._run = 0
        self._decisions = 0
        self._latency_sum = 0.0
        self._offload_time = 0.0
        self._busy_time = 0.0
        self._dist_closed = 0.0
        self._prev = None  # (t_capture, t_decide, p_pre) of the latest record
        self._weighted_qon = 0.0
        self._successes = 0
        self._steps = 0
        self.history: list[StepResult] = []
        k0 = self._frame(0.0)
        self._last_theta = self.table.theta_list[self._hi][k0]
        self._last_p = self.table.p_list[self._hi][k0]
        c0 = float(self._c_frames[k0])
        self.state = self._build_state(c0, 0.0)
        return self.state

    def distance(self) -> float:
        if self._prev is None:
            return 0.0
        if self.crashed:
            return self._dist_closed
        tc, td, p = self._prev
        return self._dist_closed + self.config.v_max * (1.0 - p) * (td - tc)

    def step(self, action: Action | int) -> StepResult:
        if not self._started or self.done:
            raise ContractViolation("step() called on a finished episode; call reset()")
        cfg = self.config
        if not isinstance(action, Action):
            action = decode_action(action)
        grant = self._grant(self.step_index)
        executed = action
        if action.offload and not grant.granted > 0:
            # dropped by the allocator: no edge service, run the same resolution onboard
            executed = Action(action.r)
        key = self.table.key(executed.r, executed.j)
        prof = cfg.latency_profile
        if executed.offload:
            base = edge_compute_latency(prof, executed.r, grant.granted) + prof.fixed_overhead + prof.propagation
            kbits = prof.payload_kb[(executed.r, executed.j)] * 8.0
        else:
            base = local_latency(prof, executed.r)
            kbits = 0.0
        forced = cfg.forced_latency
        theta_pred = self.table.theta_list[key]
        p_pred = self.table.p_list[key]
        theta_gt = self.table.gt_theta_list
        bw = cfg.bandwidth
        b_off = cfg.bandwidth_offset
        r_off = cfg.route_offset
        fp = cfg.route.frame_period
        n_frames = self._n_frames
        eps = cfg.epsilon
        eps_crash = cfg.crash_rule.epsilon_crash
        k_crash = cfg.crash_rule.k
        v_max = cfg.v_max
        min_int = self._min_interval
        writer = self._writer
        label = str(executed)

        start = self.clock
        window_end = start + cfg.tau
        thetas: list[float] = []
        ps: list[float] = []
        records: list[DecisionRecord] = []
        ok = 0
        lat_sum = 0.0
        busy = 0.0
        exhausted = False
        t = start
        while True:
            if forced is not None:
                lat = forced
            elif kbits > 0.0:
                lat = base + kbits / bw.at(b_off + t)
            else:
                lat = base
            k_cap = int(math.floor((r_off + t) / fp + 0.5))
            k_arr = int(math.floor((r_off + t + lat) / fp + 0.5))
            if k_arr >= n_frames:
                exhausted = True
                break
            th = theta_pred[k_cap]
            pp = p_pred[k_cap]
            gt = theta_gt[k_arr]
            err = abs(th - gt)
            td = t + lat
            rec = DecisionRecord(t, td, th, gt, pp, executed)
            records.append(rec)
            thetas.append(th)
            ps.append(pp)
            if err <= eps:
                ok += 1
            lat_sum += lat
            if writer is not None:
                writer.writerow((repr(t), repr(td), repr(th), repr(gt), repr(pp), label, repr(lat)))
            if self._prev is not None:
                ptc, ptd, pp_prev = self._prev
                self._dist_closed += v_max * (1.0 - pp_prev) * (td - ptd)
            self._prev = (t, td, pp)
            self._run = self._run + 1 if err > eps_crash else 0
            interval = lat if lat > min_int else min_int
            if self._run >= k_crash:
                self.crashed = True
                busy += lat
                t = td
                break
            busy += interval
            t = t + interval
            if t >= window_end or t >= cfg.episode_length:
                break

        n = len(records)
        self.clock = t
        self._decisions += n
        self._latency_sum += lat_sum
        self._busy_time += busy
        if executed.offload:
            self._offload_time += busy
        reward = ok / n if n else 0.0
        self._successes += ok
        self._weighted_qon += reward * (t - start)
        self._steps += 1
        self.step_index += 1
        self.done = self.crashed or exhausted or self.clock >= cfg.episode_length - 1e-9

        if n:
            self._last_theta, self._last_p = thetas[-1], ps[-1]
        d = dynamics_arrays(thetas, ps, cfg.eie).value
        c = self._window_c(start, min(t, window_end))
        self.state = self._build_state(c, d)
        info = StepInfo(
            decisions=n,
            mean_latency=lat_sum / n if n else 0.0,
            distance=self.distance(),
            crashed=self.crashed,
            qon=reward,
            start=start,
            end=t,
            offload_time=busy if executed.offload else 0.0,
            busy_time=busy,
            granted_cores=grant.granted,
            observed_cores=grant.observed,
            executed=label,
            records=tuple(records),
        )
        result = StepResult(self.state, reward, self.done, info)
        self.history.append(result)
        return result

    def summary(self) -> EpisodeSummary:
        """Episode aggregates; time after a crash counts as failed navigation."""
        elapsed = self.clock
        denom = max(elapsed, self.config.episode_length) if self.crashed else elapsed
        return EpisodeSummary(
            qon=self._weighted_qon / denom if denom > 0 else 0.0,
            qon_flown=self._successes / self._decisions if self._decisions else 0.0,
            mean_latency=self._latency_sum / self._decisions if self._decisions else 0.0,
            distance=self.distance(),
            offload_ratio=self._offload_time / self._busy_time if self._busy_time > 0 else 0.0,
            crashed=self.crashed,
            decisions=self._decisions,
            steps=self._steps,
            elapsed=elapsed,
        )


def with_overrides(config: SimConfig, **changes) -> SimConfig:
    return replace(config, **changes)
