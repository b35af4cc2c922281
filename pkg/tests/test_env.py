from __future__ import annotations

import io
import math

import numpy as np
import pytest

from conftest import constant_bandwidth, small_config, straight_route, turning_route
from edgenav.actions import ACTIONS, Action
from edgenav.env import CoreGrant, NavigationEnv, NormCaps, SchedulerState, observe_normalized
from edgenav.errors import ContractViolation, ValidationError
from edgenav.latency import zero_latency_profile
from edgenav.metrics import CrashRule, flight_distance
from edgenav.navmodel import zero_degradation
from edgenav.traces import RouteSpec, Segment, generate_route


def run(env, actions):
    env.reset()
    out = []
    for a in actions:
        if env.done:
            break
        out.append(env.step(a))
    return out


def test_reset_is_deterministic():
    a = NavigationEnv(small_config(seed=3)).reset()
    b = NavigationEnv(small_config(seed=3)).reset()
    assert a == b


def test_same_actions_same_results():
    acts = [0, 5, 11, 2]
    r1 = run(NavigationEnv(small_config(seed=1)), acts)
    r2 = run(NavigationEnv(small_config(seed=1)), acts)
    assert r1 == r2


def test_perfect_oracle_rewards_one():
    cfg = small_config(latency_profile=zero_latency_profile(), degradation=zero_degradation())
    env = NavigationEnv(cfg)
    for res in run(env, [i % 12 for i in range(cfg.n_steps)]):
        assert res.reward == 1.0
    assert env.summary().qon == 1.0


def test_forced_latency_ordering():
    route = turning_route(120.0, seed=2)
    q = {}
    for lat in (0.5, 1.0):
        cfg = small_config(route=route, forced_latency=lat, episode_length=100.0, crash_rule=CrashRule(10.0, 99))
        env = NavigationEnv(cfg)
        run(env, [0] * cfg.n_steps)
        q[lat] = env.summary().qon
    assert q[0.5] > q[1.0]


def test_decisions_per_window():
    env = NavigationEnv(small_config(forced_latency=0.29))
    res = env.reset() and env.step(0)
    assert abs(res.info.decisions - 17) <= 1


def test_step_reward_is_window_qon():
    env = NavigationEnv(small_config(seed=4))
    env.reset()
    res = env.step(Action(112, "edge", 10))
    errs = [r.error for r in res.info.records]
    assert res.reward == sum(e <= 0.13 for e in errs) / len(errs)


def test_step_after_done():
    env = NavigationEnv(small_config(episode_length=5.0))
    run(env, [0])
    assert env.done
    with pytest.raises(ContractViolation):
        env.step(0)


def test_step_before_reset():
    with pytest.raises(ContractViolation):
        NavigationEnv(small_config()).step(0)


def test_episode_length_in_steps():
    env = NavigationEnv(small_config(episode_length=20.0, crash_rule=CrashRule(10.0, 99)))
    res = run(env, [2] * 10)
    assert len(res) == 4 and res[-1].done


def test_invalid_action_index():
    env = NavigationEnv(small_config())
    env.reset()
    with pytest.raises(ValidationError):
        env.step(12)


def test_zero_cores_offload_runs_locally():
    env = NavigationEnv(small_config(edge_cores=0.0))
    env.reset()
    res = env.step(Action(224, "edge", 95))
    assert res.info.executed == "224:local"
    assert res.info.offload_time == 0.0


def test_offload_ratio_extremes():
    env = NavigationEnv(small_config())
    run(env, [0] * 4)
    assert env.summary().offload_ratio == 0.0
    run(env, [3] * 4)
    assert env.summary().offload_ratio == 1.0


def test_distance_matches_metric_module():
    cfg = small_config(route=turning_route(120.0, seed=5), episode_length=100.0, seed=2)
    for actions in ([0] * 20, [11] * 20, [i % 12 for i in range(20)]):
        env = NavigationEnv(cfg)
        res = run(env, actions)
        records = [r for step in res for r in step.info.records]
        assert env.distance() == pytest.approx(flight_distance(records, cfg.v_max, cfg.crash_rule), rel=1e-12)


def slalom_route():
    segs = (Segment("straight", 4.0),) + (Segment("curve", 2.0, math.pi / 2),) * 58
    return generate_route(RouteSpec(120.0, segs))


def test_crash_terminates():
    # a half-second lag on a two-second slalom puts every command a quarter swing behind
    cfg = small_config(route=slalom_route(), forced_latency=0.5, episode_length=100.0)
    env = NavigationEnv(cfg)
    res = run(env, [0] * 20)
    assert env.crashed and res[-1].done and res[-1].info.crashed
    assert len(res) < 20
    s = env.summary()
    assert s.crashed and s.qon <= s.qon_flown


def test_provider_grant_and_observation():
    cfg = small_config(edge_cores_provider=lambda i, t: CoreGrant(1.0, 8.0))
    env = NavigationEnv(cfg)
    st = env.reset()
    assert st.s == 8.0
    res = env.step(3)
    assert res.info.granted_cores == 1.0 and res.info.observed_cores == 8.0


def test_edge_latency_uses_granted_cores():
    lat = {}
    for cores in (1.0, 8.0):
        env = NavigationEnv(small_config(edge_cores=cores))
        env.reset()
        lat[cores] = env.step(Action(448, "edge", 95)).info.mean_latency
    assert lat[1.0] > lat[8.0]


def test_record_sink_writes_csv():
    sink = io.StringIO()
    env = NavigationEnv(small_config(record_sink=sink))
    res = run(env, [0, 4])
    lines = sink.getvalue().strip().splitlines()
    assert lines[0] == "t_capture,t_decide,theta_pre,theta_gt,p_pre,action,latency"
    assert len(lines) - 1 == sum(r.info.decisions for r in res)


def test_state_fields_after_step():
    env = NavigationEnv(small_config(bandwidth=constant_bandwidth(3210.0), edge_cores=2.5))
    env.reset()
    st = env.step(1).state
    assert st.b == 3210.0 and st.s == 2.5
    assert st.c >= 0 and st.d >= 0


def test_straight_zero_noise_route_has_zero_complexity():
    cfg = small_config(route=straight_route(30.0), degradation=zero_degradation())
    env = NavigationEnv(cfg)
    env.reset()
    st = env.step(0).state
    assert st.c == 0.0 and st.d == pytest.approx(0.0, abs=1e-15)


class TestNormalization:
    caps = NormCaps(c_cap=1.0, d_cap=0.5, b_max=10000.0, s_max=12.0)

    def test_bandwidth_at_cap(self):
        v = observe_normalized(SchedulerState(0, 0, 10000.0, 0), self.caps)
        assert v[2] == 1.0

    def test_zero_state(self):
        assert np.all(observe_normalized(SchedulerState(0, 0, 0, 0), self.caps) == 0.0)

    def test_clamped(self):
        v = observe_normalized(SchedulerState(3.0, 9.0, 5e5, 40.0), self.caps)
        assert np.all(v == 1.0)

    def test_without_eie_uses_raw_outputs(self):
        v = observe_normalized(SchedulerState(0.9, 0.4, 0, 0, theta=-math.pi, p=0.3), self.caps, eie=False)
        assert v[0] == 0.0 and v[1] == pytest.approx(0.3)

    def test_trace_max_when_uncapped(self):
        caps = NormCaps(b_max=None)
        with pytest.raises(ValidationError):
            observe_normalized(SchedulerState(0, 0, 1, 0), caps)
        assert observe_normalized(SchedulerState(0, 0, 500, 0), caps, b_max=1000.0)[2] == 0.5


def test_config_validation():
    with pytest.raises(ValidationError):
        NavigationEnv(small_config(episode_length=12.0))
    with pytest.raises(ValidationError):
        NavigationEnv(small_config(route_offset=1e6))
    with pytest.raises(ValidationError):
        NavigationEnv(small_config(edge_cores=-1.0))


def test_all_actions_run():
    env = NavigationEnv(small_config(episode_length=60.0))
    res = run(env, list(range(12)))
    assert [r.info.executed for r in res] == [str(a) for a in ACTIONS][: len(res)]
