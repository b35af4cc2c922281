from __future__ import annotations

import math
import time

import numpy as np
import pytest

from edgenav.config import Suite, default_config
from edgenav.env import SimConfig
from edgenav.experiments import TableCache, train_agent
from edgenav.traces import BandwidthTrace, RouteSpec, Segment, generate_route


def straight_route(duration: float = 30.0, noise: float = 0.0, seed: int = 0):
    return generate_route(RouteSpec(duration, (Segment("straight", duration),), noise_scale=noise, seed=seed))


def turning_route(duration: float = 60.0, seed: int = 0):
    segs = []
    t = 0.0
    k = 0
    while t < duration - 1e-9:
        length = min(5.0, duration - t)
        if k % 2:
            segs.append(Segment("turn", length, (math.pi / 3) * (1 if k % 4 == 1 else -1), 0.8))
        else:
            segs.append(Segment("straight", length, 0.0, 0.1))
        t += length
        k += 1
    return generate_route(RouteSpec(duration, tuple(segs), noise_scale=0.01, seed=seed))


def constant_bandwidth(kbps: float = 5000.0, duration: float = 1000.0) -> BandwidthTrace:
    return BandwidthTrace(np.array([0.0, duration]), np.array([kbps, kbps]))


def small_config(route=None, bandwidth=None, **kw) -> SimConfig:
    route = route if route is not None else turning_route()
    bandwidth = bandwidth if bandwidth is not None else constant_bandwidth()
    kw.setdefault("episode_length", 20.0)
    return SimConfig(route=route, bandwidth=bandwidth, **kw)


@pytest.fixture(scope="session")
def suite() -> Suite:
    return Suite.from_config(default_config())


@pytest.fixture(scope="session")
def table_cache(suite) -> TableCache:
    return TableCache(suite)


@pytest.fixture(scope="session")
def trained(suite, table_cache) -> dict:
    """Default-budget agents: QoN reward with and without EIE, and latency reward."""
    out = {}
    t0 = time.perf_counter()
    out["qon"], out["qon_curve"] = train_agent(suite, cache=table_cache)
    out["qon_seconds"] = time.perf_counter() - t0
    out["no_eie"], _ = train_agent(suite, eie=False, cache=table_cache)
    out["latency"], _ = train_agent(suite, reward="latency", cache=table_cache)
    return out
