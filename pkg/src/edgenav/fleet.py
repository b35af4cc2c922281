"""Lockstep multi-drone runner sharing one edge core pool."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .allocator import (
    AllocationProblem,
    OffloadRegression,
    agnostic_view,
    allocate,
    allocate_unbounded,
    even_allocation,
)
from .env import CoreGrant, EpisodeSummary, NavigationEnv, SimConfig
from .errors import ValidationError
from .scheduler import Policy, run_episode
from .traces import BandwidthTrace

STRATEGIES = ("network-aware", "even", "agnostic", "no-bounds")
STRATEGY_ALIASES = {"a3d": "network-aware"}
TERMINATIONS = ("first-crash", "all-crash")
FLEET_HEADER = ("epoch", "drone", "qon", "latency_mean", "distance", "offload_ratio", "granted_cores")


def canonical_strategy(name: str) -> str:
    name = STRATEGY_ALIASES.get(name, name)
    if name not in STRATEGIES:
        raise ValidationError(f"unknown allocation strategy {name!r}; choose from {STRATEGIES + tuple(STRATEGY_ALIASES)}")
    return name


@dataclass
class FleetConfig:
    drones: list[SimConfig]
    lam: float
    strategy: str = "network-aware"
    allocation_period: float = 5.0
    regression: OffloadRegression | None = None
    termination: str = "first-crash"
    h: float = 4.0
    l: float = 0.8  # noqa: E741

    def validate(self) -> None:
        if not self.drones:
            raise ValidationError("a fleet needs at least one drone")
        if not self.allocation_period > 0:
            raise ValidationError("allocation_period must be positive")
        if not self.lam > 0:
            raise ValidationError("lambda must be positive")
        self.strategy = canonical_strategy(self.strategy)
        if self.termination not in TERMINATIONS:
            raise ValidationError(f"termination must be one of {TERMINATIONS}")
        if self.strategy in ("network-aware", "no-bounds") and self.regression is None:
            raise ValidationError(f"strategy {self.strategy!r} needs a fitted regression")
        if not 0 < self.l < self.h:
            raise ValidationError("need 0 < l < h")
        taus = {d.tau for d in self.drones}
        if len(taus) != 1:
            raise ValidationError("all drones must share one scheduling window")


@dataclass
class FleetResult:
    summaries: list[EpisodeSummary]
    rows: list[tuple]
    allocations: list[tuple[int, int, float]]
    mean_qon: float
    mean_latency: float
    mean_distance: float
    mean_offload_ratio: float
    epochs: int = 0
    crashed: list[bool] = field(default_factory=list)


def grants_for(config: FleetConfig, bandwidths: Sequence[float]) -> list[CoreGrant]:
    """Per-drone grants for one epoch among the drones whose bandwidths are given."""
    problem = AllocationProblem(tuple(bandwidths), config.lam, config.h, config.l)
    strategy = config.strategy
    if strategy == "network-aware":
        alloc = allocate(problem, config.regression)
        return [CoreGrant(c, c) for c in alloc.cores]
    if strategy == "no-bounds":
        alloc = allocate_unbounded(problem, config.regression)
        return [CoreGrant(c, c) for c in alloc.cores]
    if strategy == "even":
        return [CoreGrant(c, c) for c in even_allocation(problem).cores]
    perceived, actual = agnostic_view(problem)
    return [CoreGrant(a, p) for p, a in zip(perceived, actual)]


def run_fleet(config: FleetConfig, policy: Policy | Sequence[Policy]) -> FleetResult:
    """Advance all drones one scheduling window at a time, re-allocating at epoch boundaries."""
    config.validate()
    n = len(config.drones)
    policies = list(policy) if isinstance(policy, (list, tuple)) else [policy] * n
    if len(policies) != n:
        raise ValidationError("need one policy per drone")
    tau = config.drones[0].tau
    grants: list[CoreGrant] = [CoreGrant(0.0, 0.0)] * n

    def provider(i: int):
        return lambda step_index, clock: grants[i]

    envs = [NavigationEnv(replace(cfg, edge_cores_provider=provider(i), record_sink=None)) for i, cfg in enumerate(config.drones)]

    def reallocate(active: list[int], clocks: Sequence[float]) -> None:
        bws = [envs[i].config.bandwidth.at(envs[i].config.bandwidth_offset + clocks[i]) for i in active]
        for i, g in zip(active, grants_for(config, bws)):
            grants[i] = g
        for i in range(n):
            if i not in active:
                grants[i] = CoreGrant(0.0, 0.0)

    # the first epoch is sized from the bandwidth at take-off
    reallocate(list(range(n)), [0.0] * n)
    for env in envs:
        env.reset()

    rows: list[tuple] = []
    alloc_log: list[tuple[int, int, float]] = []
    next_alloc = 0.0
    step = 0
    epoch = -1
    while True:
        active = [i for i in range(n) if not envs[i].done]
        if not active:
            break
        t_step = step * tau
        if t_step >= next_alloc - 1e-9:
            epoch += 1
            if step > 0:
                reallocate(active, [env.clock if not env.done else 0.0 for env in envs])
            for i in active:
                envs[i].refresh_state()
            for i in range(n):
                alloc_log.append((epoch, i, grants[i].granted))
            while next_alloc <= t_step + 1e-9:
                next_alloc += config.allocation_period
        crashed_now = False
        for i in active:
            env = envs[i]
            res = env.step(policies[i].select(env, env.state))
            info = res.info
            rows.append((
                step, i, info.qon, info.mean_latency, info.distance,
                info.offload_time / info.busy_time if info.busy_time > 0 else 0.0,
                info.granted_cores,
            ))
            crashed_now = crashed_now or info.crashed
        step += 1
        if crashed_now and config.termination == "first-crash":
            break

    summaries = [env.summary() for env in envs]
    return FleetResult(
        summaries=summaries,
        rows=rows,
        allocations=alloc_log,
        mean_qon=float(np.mean([s.qon for s in summaries])),
        mean_latency=float(np.mean([s.mean_latency for s in summaries])),
        mean_distance=float(np.mean([s.distance for s in summaries])),
        mean_offload_ratio=float(np.mean([s.offload_ratio for s in summaries])),
        epochs=epoch + 1,
        crashed=[s.crashed for s in summaries],
    )


def write_fleet_csv(result: FleetResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLEET_HEADER)
        for step, drone, qon, lat, dist, ratio, cores in result.rows:
            w.writerow((step, drone, repr(qon), repr(lat), repr(dist), repr(ratio), repr(cores)))


def pinned_bandwidth(b: float, duration: float) -> BandwidthTrace:
    return BandwidthTrace(np.array([0.0, duration]), np.array([b, b]), name=f"pinned-{b:g}")


def collect_regression_samples(
    policy: Policy, configs: Sequence[SimConfig], bandwidth_levels: Sequence[float]
) -> list[tuple[float, float]]:
    """Offloading ratio of ``policy`` with the bandwidth held at each level (mean over ``configs``)."""
    samples = []
    for b in bandwidth_levels:
        if not b > 0:
            raise ValidationError("bandwidth levels must be positive")
        ratios = []
        for cfg in configs:
            trace = pinned_bandwidth(float(b), cfg.bandwidth_offset + cfg.episode_length + 1.0)
            norm = cfg.norm if cfg.norm.b_max is not None else replace(cfg.norm, b_max=cfg.bandwidth.max_kbps)
            env = NavigationEnv(replace(cfg, bandwidth=trace, bandwidth_offset=0.0, norm=norm, record_sink=None))
            ratios.append(run_episode(policy, env).offload_ratio)
        samples.append((float(b), float(np.mean(ratios))))
    return samples
