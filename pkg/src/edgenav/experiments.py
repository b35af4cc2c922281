"""Experiment drivers shared by the CLI and the test-suite.

Training draws a random route segment, bandwidth trace, trace offset and edge
core count for every episode.  Evaluation uses navigation-noise seeds that are
disjoint from the training pool.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .actions import Action
from .baselines import BaselinePolicy
from .config import Suite
from .env import NavigationEnv, SimConfig
from .errors import ValidationError
from .fleet import FleetConfig, FleetResult, canonical_strategy, collect_regression_samples, run_fleet
from .navmodel import NavTable
from .scheduler import A2cAgent, AgentPolicy, EvalSummary, FixedPolicy, Policy, TrainConfig, evaluate, run_episode, train

log = logging.getLogger(__name__)

TRAIN_SEED_POOL = 32
EVAL_SEED_BASE = 1_000_000


class TableCache:
    """Navigation lookup tables keyed by noise seed."""

    def __init__(self, suite: Suite) -> None:
        self.suite = suite
        self._tables: dict[int, NavTable] = {}

    def get(self, seed: int) -> NavTable:
        t = self._tables.get(seed)
        if t is None:
            t = self._tables[seed] = self.suite.table(seed)
        return t


def _draw_offsets(suite: Suite, rng: np.random.Generator, trace_idx: int, length: float) -> tuple[float, float]:
    route_off = float(rng.uniform(0.0, suite.max_route_offset(length)))
    bw = suite.bandwidths[trace_idx]
    bw_off = float(rng.uniform(bw.start, max(bw.start, bw.end - length)))
    # snap to the frame grid so identical draws reproduce identical frames
    fp = suite.route.frame_period
    return round(route_off / fp) * fp, bw_off


def training_factory(suite: Suite, cache: TableCache | None = None) -> Callable[[np.random.Generator, int], NavigationEnv]:
    cache = cache or TableCache(suite)
    tcfg = suite.cfg["train"]
    cores = tcfg.get("cores", {})
    p_zero = float(cores.get("p_zero", 0.1))
    lo, hi = float(cores.get("min", 0.5)), float(cores.get("max", 12.0))
    length = float(suite.cfg["sim"]["episode_length"])

    def make(rng: np.random.Generator, episode: int) -> NavigationEnv:
        trace_idx = int(rng.integers(len(suite.bandwidths)))
        route_off, bw_off = _draw_offsets(suite, rng, trace_idx, length)
        seed = int(rng.integers(TRAIN_SEED_POOL))
        s = 0.0 if rng.random() < p_zero else float(rng.uniform(lo, hi))
        cfg = suite.sim_config(
            trace_idx, seed=seed, nav_table=cache.get(seed), edge_cores=s,
            route_offset=route_off, bandwidth_offset=bw_off,
        )
        return NavigationEnv(cfg)

    return make


def evaluation_factory(suite: Suite, eval_seed: int, cache: TableCache | None = None, **overrides):
    """Episode ``i`` flies trace ``i % n_traces`` on a segment drawn from ``eval_seed``."""
    cache = cache or TableCache(suite)
    length = float(overrides.get("episode_length", suite.cfg["sim"]["episode_length"]))
    nav_seed = EVAL_SEED_BASE + int(eval_seed)

    def make(rng: np.random.Generator, episode: int) -> NavigationEnv:
        trace_idx = episode % len(suite.bandwidths)
        route_off, bw_off = _draw_offsets(suite, rng, trace_idx, length)
        cfg = suite.sim_config(
            trace_idx, seed=nav_seed, nav_table=cache.get(nav_seed),
            route_offset=route_off, bandwidth_offset=bw_off,
        )
        return NavigationEnv(replace(cfg, **overrides) if overrides else cfg)

    return make


def eval_episodes(suite: Suite) -> int:
    return len(suite.bandwidths) * int(suite.cfg["eval"].get("episodes_per_trace", 2))


def evaluate_on_seed(policy: Policy, suite: Suite, eval_seed: int, cache: TableCache | None = None, **overrides) -> EvalSummary:
    return evaluate(policy, evaluation_factory(suite, eval_seed, cache, **overrides), eval_episodes(suite), seed=eval_seed)


def _train_seed(suite: Suite) -> int:
    return int(suite.cfg["train"].get("seed", 0)) + int(suite.cfg.get("seed", 0) or 0)


def make_agent(suite: Suite, reward: str | None = None, eie: bool | None = None, seed: int | None = None) -> A2cAgent:
    t = suite.cfg["train"]
    return A2cAgent(
        seed=_train_seed(suite) if seed is None else int(seed),
        lr=float(t["lr"]),
        gamma=float(t["gamma"]),
        entropy_coef=float(t["entropy_coef"]),
        value_coef=float(t["value_coef"]),
        max_grad_norm=None if t.get("max_grad_norm") is None else float(t["max_grad_norm"]),
        reward_mode=reward or t.get("reward", "qon"),
        eie_enabled=bool(t.get("eie", True) if eie is None else eie),
        normalize_advantage=bool(t.get("normalize_advantage", True)),
        n_steps=None if t.get("n_steps") is None else int(t["n_steps"]),
        bootstrap_truncated=bool(t.get("bootstrap_truncated", True)),
        value_scale=None if t.get("value_scale") is None else float(t["value_scale"]),
    )


def train_agent(
    suite: Suite,
    reward: str | None = None,
    eie: bool | None = None,
    episodes: int | None = None,
    seed: int | None = None,
    cache: TableCache | None = None,
) -> tuple[A2cAgent, list[float]]:
    t = suite.cfg["train"]
    seed = _train_seed(suite) if seed is None else int(seed)
    agent = make_agent(suite, reward, eie, seed)
    tc = TrainConfig(
        episodes=int(t["episodes"] if episodes is None else episodes),
        seed=seed,
        episodes_per_update=int(t.get("episodes_per_update", 1)),
        log_every=int(t.get("log_every", 0)),
    )
    return train(agent, training_factory(suite, cache), tc)


# ----------------------------------------------------------------------------
# studies


def full_route_length(suite: Suite) -> float:
    tau = float(suite.cfg["sim"]["tau"])
    return math.floor((suite.route.duration - 2.0) / tau) * tau


@dataclass(frozen=True)
class SweepRow:
    latency: float
    qon: float
    distance: float
    crashed: bool
    elapsed: float


def latency_sweep(suite: Suite, latencies: Sequence[float], seed: int, action: Action = Action(448), trace: int = 0) -> list[SweepRow]:
    """Fly the whole route under one configuration with every decision delayed by a fixed latency."""
    rows = []
    table = suite.table(seed)
    length = full_route_length(suite)
    for lat in latencies:
        cfg = suite.sim_config(trace, seed=seed, nav_table=table, forced_latency=float(lat), episode_length=length)
        s = run_episode(FixedPolicy(action), NavigationEnv(cfg))
        rows.append(SweepRow(float(lat), s.qon, s.distance, s.crashed, s.elapsed))
    return rows


def window_features(suite: Suite, action: Action, seeds: Sequence[int], trace: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(c, d, QoN) per completed 5 s window of fixed-configuration flights over the whole route."""
    c, d, q = [], [], []
    length = full_route_length(suite)
    for seed in seeds:
        env = NavigationEnv(suite.sim_config(trace, seed=seed, episode_length=length))
        env.reset()
        while not env.done:
            res = env.step(action)
            if res.info.decisions and not res.info.crashed:
                c.append(res.state.c)
                d.append(res.state.d)
                q.append(res.reward)
    return np.array(c), np.array(d), np.array(q)


def baseline_policies() -> dict[str, Policy]:
    return {k: BaselinePolicy(k) for k in ("local", "offload", "dynamic")}


# ----------------------------------------------------------------------------
# fleets


def fleet_config(
    suite: Suite,
    lam: float | None = None,
    strategy: str | None = None,
    n_drones: int | None = None,
    seed: int = 0,
    cache: TableCache | None = None,
) -> FleetConfig:
    """Drone i flies trace ``i % n_traces`` from a seeded route segment."""
    f = suite.cfg["fleet"]
    n = len(suite.bandwidths) if n_drones is None else int(n_drones)
    if n < 1:
        raise ValidationError("need at least one drone")
    length = float(f.get("episode_length", suite.cfg["sim"]["episode_length"]))
    cache = cache or TableCache(suite)
    rng = np.random.default_rng(seed)
    drones: list[SimConfig] = []
    for i in range(n):
        trace_idx = i % len(suite.bandwidths)
        route_off, bw_off = _draw_offsets(suite, rng, trace_idx, length)
        nav_seed = EVAL_SEED_BASE + 10_000 + int(seed) * 100 + i
        drones.append(suite.sim_config(
            trace_idx, seed=nav_seed, nav_table=cache.get(nav_seed), episode_length=length,
            route_offset=route_off, bandwidth_offset=bw_off,
        ))
    return FleetConfig(
        drones=drones,
        lam=float(f["lam"] if lam is None else lam),
        strategy=canonical_strategy(strategy or f["strategy"]),
        allocation_period=float(f["allocation_period"]),
        regression=suite.regression(),
        termination=f["termination"],
        h=float(f["h"]),
        l=float(f["l"]),
    )


def fleet_run(suite: Suite, policy: Policy, **kw) -> FleetResult:
    return run_fleet(fleet_config(suite, **kw), policy)


def regression_samples(suite: Suite, policy: Policy, seeds: Sequence[int] = (0, 1), cache: TableCache | None = None):
    cache = cache or TableCache(suite)
    levels = [float(b) for b in suite.cfg["fleet"]["regression_levels"]]
    configs = []
    rng = np.random.default_rng(0)
    for seed in seeds:
        nav_seed = EVAL_SEED_BASE + 20_000 + int(seed)
        route_off, _ = _draw_offsets(suite, rng, 0, float(suite.cfg["sim"]["episode_length"]))
        configs.append(suite.sim_config(0, seed=nav_seed, nav_table=cache.get(nav_seed), route_offset=route_off))
    return collect_regression_samples(policy, configs, levels)


def agent_policy(agent: A2cAgent) -> AgentPolicy:
    return AgentPolicy(agent)
