from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from conftest import small_config
from edgenav.actions import ACTIONS, N_ACTIONS, Action, action_index, decode_action
from edgenav.baselines import BaselinePolicy
from edgenav.env import NavigationEnv
from edgenav.errors import TrainingDivergedError, ValidationError
from edgenav.latency import zero_latency_profile
from edgenav.navmodel import zero_degradation
from edgenav.nnet import Mlp, log_softmax, softmax
from edgenav.scheduler import (
    A2cAgent,
    AgentPolicy,
    FixedPolicy,
    TrainConfig,
    a2c_gradients,
    act,
    bootstrapped_returns,
    discounted_returns,
    evaluate,
    train,
)


class BanditEnv:
    """Fixed-length episodes; reward 1 for ``good`` and 0 otherwise."""

    def __init__(self, good: int = 7, length: int = 5, reward: float = 1.0) -> None:
        self.good, self.length, self.reward_value = good, length, reward
        self.crashed = False

    def reset(self):
        self.t = 0
        self.done = False
        return None

    def observe_normalized(self, state, eie=True):
        return np.array([0.5, 0.5, 0.5, 0.5])

    def step(self, a):
        self.t += 1
        self.done = self.t >= self.length
        r = self.reward_value if int(a) == self.good else 0.0
        info = SimpleNamespace(mean_latency=0.0 if int(a) == self.good else 1.0)
        return SimpleNamespace(state=None, reward=r, done=self.done, info=info)


class TestActions:
    def test_decode_ends(self):
        assert decode_action(0) == Action(448)
        assert decode_action(11) == Action(112, "edge", 10)

    def test_round_trip(self):
        for i in range(N_ACTIONS):
            assert action_index(decode_action(i)) == i

    def test_ordering(self):
        assert [str(a) for a in ACTIONS[3:6]] == ["448:edge:95", "448:edge:60", "448:edge:10"]

    def test_invalid(self):
        for bad in (-1, 12, 2.5, True):
            with pytest.raises(ValidationError):
                decode_action(bad)
        with pytest.raises(ValidationError):
            Action(448, "local", 95)
        with pytest.raises(ValidationError):
            Action(448, "edge")

    def test_parse(self):
        assert Action.parse("224:edge:60") == Action(224, "edge", 60)
        assert Action.parse("112:local") == Action(112)
        with pytest.raises(ValidationError):
            Action.parse("fast")


class TestAct:
    def test_zero_actor_uniform_and_tie_break(self):
        agent = A2cAgent(actor=Mlp([4, 8, 12], zero=True))
        x = np.full(4, 0.3)
        assert np.allclose(agent.probabilities(x), 1 / 12)
        assert act(agent, x) == 0

    def test_sample_reproducible(self):
        agent = A2cAgent(seed=2)
        x = np.array([0.1, 0.2, 0.3, 0.4])
        assert act(agent, x, "sample", 11) == act(agent, x, "sample", 11)

    def test_sample_frequencies_follow_policy(self):
        agent = A2cAgent(seed=0)
        agent.actor.biases[-1][:] = np.linspace(-1, 1, 12)
        x = np.zeros(4)
        rng = np.random.default_rng(0)
        counts = np.bincount([act(agent, x, "sample", rng) for _ in range(20000)], minlength=12)
        assert np.allclose(counts / 20000, agent.probabilities(x), atol=0.01)

    def test_rejects_bad_state(self):
        agent = A2cAgent()
        with pytest.raises(ValidationError):
            act(agent, np.zeros(3))
        with pytest.raises(ValidationError):
            act(agent, np.array([0, 0, np.nan, 0]))
        with pytest.raises(ValidationError):
            act(agent, np.zeros(4), mode="softmax")


class TestReturns:
    def test_discounted(self):
        assert np.allclose(discounted_returns([1, 0, 2], 0.5), [1 + 0.5 * 0 + 0.25 * 2, 0 + 0.5 * 2, 2])

    def test_one_step(self):
        r, v = [1.0, 2.0, 3.0], [10.0, 20.0, 30.0]
        out = bootstrapped_returns(r, v, 0.9, n=1, last_value=40.0)
        assert np.allclose(out, [1 + 0.9 * 20, 2 + 0.9 * 30, 3 + 0.9 * 40])

    def test_two_step(self):
        r, v = [1.0, 2.0, 3.0], [10.0, 20.0, 30.0]
        out = bootstrapped_returns(r, v, 0.9, n=2, last_value=0.0)
        assert np.allclose(out, [1 + 0.9 * 2 + 0.81 * 30, 2 + 0.9 * 3 + 0.81 * 0, 3 + 0.9 * 0])

    def test_monte_carlo_with_tail(self):
        out = bootstrapped_returns([1.0, 1.0], None, 0.5, n=None, last_value=4.0)
        assert np.allclose(out, [1 + 0.5 + 0.25 * 4, 1 + 0.5 * 4])

    def test_long_horizon_equals_monte_carlo(self):
        r = np.random.default_rng(0).uniform(size=7)
        v = np.random.default_rng(1).uniform(size=7)
        assert np.allclose(bootstrapped_returns(r, v, 0.95, n=50), discounted_returns(r, 0.95))


class TestGradients:
    def setup_batch(self, agent, n=6, seed=0):
        rng = np.random.default_rng(seed)
        states = rng.uniform(size=(n, 4))
        actions = rng.integers(0, 12, n)
        returns = rng.normal(size=n) * 5
        return states, actions, returns

    def test_perfect_critic_zero_actor_gradient(self):
        agent = A2cAgent(seed=1, entropy_coef=0.0, normalize_advantage=False)
        states, actions, _ = self.setup_batch(agent)
        returns = agent.values(states)
        grads_a, grads_c, _ = a2c_gradients(agent, states, actions, returns)
        assert all(np.allclose(g, 0.0, atol=1e-14) for g in grads_a + grads_c)

    def test_actor_gradient_finite_differences(self):
        agent = A2cAgent(seed=3, actor_hidden=(5,), critic_hidden=(4,), normalize_advantage=False)
        states, actions, returns = self.setup_batch(agent)
        adv = returns - agent.values(states)
        n = len(actions)

        def loss():
            logits = agent.actor(states)
            logp = log_softmax(logits)
            p = softmax(logits)
            ent = -(p * logp).sum(axis=1)
            return float(-(logp[np.arange(n), actions] * adv).mean() - agent.entropy_coef * ent.mean())

        grads_a, _, _ = a2c_gradients(agent, states, actions, returns)
        h = 1e-6
        for p, g in zip(agent.actor.params, grads_a):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up = loss()
                flat[i] = old - h
                down = loss()
                flat[i] = old
                assert gflat[i] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-8)

    def test_critic_gradient_finite_differences(self):
        agent = A2cAgent(seed=4, actor_hidden=(5,), critic_hidden=(4,), value_scale=3.0)
        states, actions, returns = self.setup_batch(agent)

        def loss():
            return float(agent.value_coef * ((returns - agent.values(states)) ** 2).mean())

        _, grads_c, _ = a2c_gradients(agent, states, actions, returns)
        h = 1e-6
        for p, g in zip(agent.critic.params, grads_c):
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up = loss()
                flat[i] = old - h
                down = loss()
                flat[i] = old
                assert gflat[i] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-8)


class TestTraining:
    def test_zero_episodes_returns_agent_unchanged(self):
        agent = A2cAgent(seed=0)
        before = [p.copy() for p in agent.actor.params + agent.critic.params]
        out, curve = train(agent, lambda rng, i: BanditEnv(), TrainConfig(episodes=0))
        assert out is agent and curve == []
        assert all(np.array_equal(a, b) for a, b in zip(before, agent.actor.params + agent.critic.params))

    def test_bandit_is_learned(self):
        agent = A2cAgent(seed=0)
        train(agent, lambda rng, i: BanditEnv(good=7), TrainConfig(episodes=200, seed=0))
        probs = agent.probabilities(np.full(4, 0.5))
        assert int(np.argmax(probs)) == 7 and probs[7] > 0.9

    def test_latency_reward_mode(self):
        agent = A2cAgent(seed=0, reward_mode="latency")
        train(agent, lambda rng, i: BanditEnv(good=2), TrainConfig(episodes=200, seed=0))
        assert act(agent, np.full(4, 0.5)) == 2

    def test_training_is_deterministic(self):
        def run():
            agent = A2cAgent(seed=5)
            _, curve = train(agent, lambda rng, i: NavigationEnv(small_config(seed=int(rng.integers(3)))), TrainConfig(episodes=5, seed=1))
            return curve, [p.copy() for p in agent.actor.params]

        (c1, p1), (c2, p2) = run(), run()
        assert c1 == c2 and all(np.array_equal(a, b) for a, b in zip(p1, p2))

    def test_divergence_detected(self):
        agent = A2cAgent(seed=0)
        with pytest.raises(TrainingDivergedError) as exc:
            train(agent, lambda rng, i: BanditEnv(reward=float("nan")), TrainConfig(episodes=3))
        assert "episode" in exc.value.diagnostics

    def test_invalid_hyperparameters(self):
        with pytest.raises(ValidationError):
            A2cAgent(gamma=0.0)
        with pytest.raises(ValidationError):
            A2cAgent(reward_mode="distance")
        with pytest.raises(ValidationError):
            A2cAgent(n_steps=0)


def test_agent_save_load(tmp_path):
    agent = A2cAgent(seed=9, eie_enabled=False, reward_mode="latency", n_steps=3)
    train(agent, lambda rng, i: BanditEnv(), TrainConfig(episodes=3))
    agent.save(tmp_path / "a.npz")
    back = A2cAgent.load(tmp_path / "a.npz")
    x = np.array([0.2, 0.4, 0.6, 0.8])
    assert np.array_equal(back.probabilities(x), agent.probabilities(x))
    assert back.value(x) == agent.value(x)
    assert back.hparams() == agent.hparams()


class TestEvaluation:
    def factory(self, **kw):
        return lambda rng, i: NavigationEnv(small_config(seed=i, **kw))

    def test_local_never_offloads(self):
        assert evaluate(BaselinePolicy("local"), self.factory(), 3).offload_ratio == 0.0

    def test_offload_always_offloads(self):
        assert evaluate(BaselinePolicy("offload"), self.factory(), 3).offload_ratio == 1.0

    def test_perfect_oracle(self):
        f = self.factory(latency_profile=zero_latency_profile(), degradation=zero_degradation())
        for pol in (FixedPolicy(Action(112, "edge", 10)), AgentPolicy(A2cAgent(seed=3)), BaselinePolicy("dynamic")):
            assert evaluate(pol, f, 2).mean_qon == 1.0

    def test_policy_names(self):
        assert AgentPolicy(A2cAgent()).name == "a2c"
        assert AgentPolicy(A2cAgent(eie_enabled=False)).name == "a2c-no-eie"


def test_default_suite_learning_curve_rises(trained):
    curve = np.asarray(trained["qon_curve"])
    tenth = max(1, len(curve) // 10)
    assert curve[-tenth:].mean() > curve[:tenth].mean()
