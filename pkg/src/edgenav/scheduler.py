"""Advantage actor-critic scheduler over the 12 discrete configurations."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .actions import ACTIONS, N_ACTIONS, Action, action_index, decode_action  # noqa: F401  (re-exported)
from .env import NavigationEnv, SchedulerState
from .errors import TrainingDivergedError, ValidationError
from .nnet import Mlp, RmsProp, backward, forward, load_networks, log_softmax, save_networks, softmax

log = logging.getLogger(__name__)

STATE_DIM = 4
REWARD_MODES = ("qon", "latency")


class Policy(Protocol):
    def select(self, env: NavigationEnv, state: SchedulerState) -> Action: ...


class A2cAgent:
    """Actor (4 -> 128 -> 128 -> 12) and critic (4 -> 64 -> 64 -> 1) with their optimizers."""

    def __init__(
        self,
        seed: int = 0,
        actor_hidden: Sequence[int] = (128, 128),
        critic_hidden: Sequence[int] = (64, 64),
        lr: float = 7e-4,
        gamma: float = 0.99,
        entropy_coef: float = 0.01,
        value_coef: float = 0.5,
        max_grad_norm: float | None = 0.5,
        reward_mode: str = "qon",
        eie_enabled: bool = True,
        rms_decay: float = 0.99,
        rms_eps: float = 1e-5,
        normalize_advantage: bool = True,
        n_steps: int | None = 1,
        bootstrap_truncated: bool = True,
        value_scale: float | None = None,
        actor: Mlp | None = None,
        critic: Mlp | None = None,
    ) -> None:
        if not 0.0 < gamma <= 1.0:
            raise ValidationError("gamma must lie in (0, 1]")
        if reward_mode not in REWARD_MODES:
            raise ValidationError(f"reward_mode must be one of {REWARD_MODES}")
        rng = np.random.default_rng(seed)
        self.actor = actor or Mlp([STATE_DIM, *actor_hidden, N_ACTIONS], rng, out_scale=0.01)
        self.critic = critic or Mlp([STATE_DIM, *critic_hidden, 1], rng)
        if self.actor.widths[-1] != N_ACTIONS or self.critic.widths[-1] != 1:
            raise ValidationError("actor must emit 12 logits and critic one value")
        self.actor_opt = RmsProp(lr, rms_decay, rms_eps)
        self.critic_opt = RmsProp(lr, rms_decay, rms_eps)
        self.seed = seed
        self.gamma = gamma
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.max_grad_norm = max_grad_norm
        self.reward_mode = reward_mode
        self.eie_enabled = eie_enabled
        self.normalize_advantage = normalize_advantage
        if n_steps is not None and n_steps < 1:
            raise ValidationError("n_steps must be a positive integer or None")
        self.n_steps = n_steps
        if value_scale is None:
            # critic output is in per-step reward units; V = output / (1 - gamma)
            value_scale = 1.0 / (1.0 - gamma) if gamma < 1.0 else 1.0
        if not value_scale > 0:
            raise ValidationError("value_scale must be positive")
        self.bootstrap_truncated = bootstrap_truncated
        self.value_scale = float(value_scale)

    def hparams(self) -> dict:
        return {
            "seed": self.seed,
            "gamma": self.gamma,
            "entropy_coef": self.entropy_coef,
            "value_coef": self.value_coef,
            "max_grad_norm": self.max_grad_norm,
            "reward_mode": self.reward_mode,
            "eie_enabled": self.eie_enabled,
            "normalize_advantage": self.normalize_advantage,
            "n_steps": self.n_steps,
            "bootstrap_truncated": self.bootstrap_truncated,
            "value_scale": self.value_scale,
        }

    def probabilities(self, state_vec) -> np.ndarray:
        return softmax(self.actor(state_vec))

    def value(self, state_vec) -> float:
        return float(self.critic(state_vec)[0]) * self.value_scale

    def values(self, states) -> np.ndarray:
        return self.critic(states)[:, 0] * self.value_scale

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {"agent": self.hparams(), **(extra or {})}
        save_networks(
            path,
            {"actor": self.actor, "critic": self.critic},
            {"actor": self.actor_opt, "critic": self.critic_opt},
            meta,
        )

    @classmethod
    def load(cls, path: str | Path) -> "A2cAgent":
        nets, opts, meta = load_networks(path)
        hp = dict(meta.get("agent", {}))
        agent = cls(actor=nets["actor"], critic=nets["critic"], **hp)
        if "actor" in opts:
            agent.actor_opt = opts["actor"]
        if "critic" in opts:
            agent.critic_opt = opts["critic"]
        return agent


def act(agent: A2cAgent, state, mode: str = "greedy", seed: int | np.random.Generator | None = None) -> int:
    """Pick an action index; greedy ties resolve to the lowest index."""
    x = np.asarray(state, dtype=float)
    if x.shape != (STATE_DIM,) or not np.all(np.isfinite(x)):
        raise ValidationError("state must be a finite 4-vector")
    logits = agent.actor(x)
    if mode == "greedy":
        return int(np.argmax(logits))
    if mode != "sample":
        raise ValidationError(f"unknown mode {mode!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    probs = softmax(logits)
    return int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), N_ACTIONS - 1))


class AgentPolicy:
    """Frozen greedy view of an agent."""

    def __init__(self, agent: A2cAgent) -> None:
        self.agent = agent
        self.name = "a2c" if agent.eie_enabled else "a2c-no-eie"

    def select(self, env: NavigationEnv, state: SchedulerState) -> Action:
        obs = env.observe_normalized(state, eie=self.agent.eie_enabled)
        return ACTIONS[act(self.agent, obs, "greedy")]


class FixedPolicy:
    def __init__(self, action: Action) -> None:
        self.action = action
        self.name = f"fixed-{action}"

    def select(self, env: NavigationEnv, state: SchedulerState) -> Action:
        return self.action


# ----------------------------------------------------------------------------
# training

EnvFactory = Callable[[np.random.Generator, int], NavigationEnv]


@dataclass
class TrainConfig:
    episodes: int = 3000
    seed: int = 0
    episodes_per_update: int = 1
    log_every: int = 0
    time_budget: float | None = None


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def bootstrapped_returns(
    rewards: Sequence[float],
    values: Sequence[float] | None,
    gamma: float,
    n: int | None = None,
    last_value: float = 0.0,
) -> np.ndarray:
    """Discounted returns cut after ``n`` steps (``None``: never) and bootstrapped from the critic.

    ``values[t]`` estimates the state before step ``t``; ``last_value``
    estimates the state after the final step and is 0 for a true terminal.
    """
    r = np.asarray(rewards, dtype=float)
    T = len(r)
    if n is None or n >= T:
        out = discounted_returns(r, gamma)
        if last_value:
            out = out + last_value * gamma ** (T - np.arange(T))
        return out
    v = np.append(np.asarray(values, dtype=float), last_value)
    out = np.empty(T)
    for t in range(T):
        end = min(t + n, T)
        acc = 0.0
        for k in range(end - 1, t - 1, -1):
            acc = r[k] + gamma * acc
        out[t] = acc + gamma ** (end - t) * v[end]
    return out


def _clip(grads: list[np.ndarray], max_norm: float | None) -> list[np.ndarray]:
    if max_norm is None:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        return [g * scale for g in grads]
    return grads


def a2c_gradients(agent: A2cAgent, states: np.ndarray, actions: np.ndarray, returns: np.ndarray):
    """Actor and critic gradients for one batch of transitions (losses are batch means)."""
    n = len(actions)
    logits, cache_a = forward(agent.actor, states)
    values, cache_c = forward(agent.critic, states)
    values = values[:, 0] * agent.value_scale
    probs = softmax(logits)
    logp = log_softmax(logits)
    advantage = returns - values
    policy_adv = advantage
    if agent.normalize_advantage and n > 1:
        policy_adv = (advantage - advantage.mean()) / (advantage.std() + 1e-8)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), actions] = 1.0
    entropy = -(probs * logp).sum(axis=1)
    g_logits = -policy_adv[:, None] * (onehot - probs)
    g_logits += agent.entropy_coef * probs * (logp + entropy[:, None])
    g_logits /= n
    g_values = (-2.0 * agent.value_coef * agent.value_scale * advantage / n)[:, None]
    grads_a = backward(agent.actor, cache_a, g_logits)
    grads_c = backward(agent.critic, cache_c, g_values)
    stats = {
        "actor_loss": float(-(logp[np.arange(n), actions] * policy_adv).mean() - agent.entropy_coef * entropy.mean()),
        "critic_loss": float(agent.value_coef * (advantage ** 2).mean()),
        "entropy": float(entropy.mean()),
    }
    return grads_a, grads_c, stats


@dataclass
class Trajectory:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    final_obs: np.ndarray
    terminal: bool
    results: list


def rollout(agent: A2cAgent, env: NavigationEnv, rng: np.random.Generator, mode: str = "sample") -> Trajectory:
    """One episode.  ``terminal`` is True only for a crash; hitting the time limit is a truncation."""
    state = env.reset()
    obs, acts, rewards, results = [], [], [], []
    while not env.done:
        x = env.observe_normalized(state, eie=agent.eie_enabled)
        a = act(agent, x, mode, rng)
        res = env.step(a)
        if agent.reward_mode == "qon":
            r = res.reward
        else:
            r = -res.info.mean_latency
        obs.append(x)
        acts.append(a)
        rewards.append(r)
        results.append(res)
        state = res.state
    final = env.observe_normalized(state, eie=agent.eie_enabled)
    return Trajectory(np.array(obs), np.array(acts, dtype=int), np.array(rewards), final, bool(env.crashed), results)


def train(agent: A2cAgent, env_factory: EnvFactory, config: TrainConfig) -> tuple[A2cAgent, list[float]]:
    """A2C with Monte-Carlo (or n-step) returns; one RMSProp update per ``episodes_per_update`` episodes."""
    rng = np.random.default_rng(config.seed)
    curve: list[float] = []
    batch_x, batch_a, batch_r = [], [], []
    t0 = time.perf_counter()
    for ep in range(config.episodes):
        env = env_factory(rng, ep)
        traj = rollout(agent, env, rng)
        x, a, r = traj.obs, traj.actions, traj.rewards
        if len(a) == 0:
            curve.append(0.0)
            continue
        batch_x.append(x)
        batch_a.append(a)
        last = 0.0
        if agent.bootstrap_truncated and not traj.terminal:
            last = agent.value(traj.final_obs)
        values = agent.values(x) if agent.n_steps is not None else None
        batch_r.append(bootstrapped_returns(r, values, agent.gamma, agent.n_steps, last))
        curve.append(float(np.mean(r)))
        final_episode = ep == config.episodes - 1
        if len(batch_x) >= config.episodes_per_update or final_episode:
            gx, ga, gr = np.concatenate(batch_x), np.concatenate(batch_a), np.concatenate(batch_r)
            grads_a, grads_c, stats = a2c_gradients(agent, gx, ga, gr)
            flat = [stats["actor_loss"], stats["critic_loss"]] + [float(np.sum(g)) for g in grads_a + grads_c]
            if not all(math.isfinite(v) for v in flat):
                raise TrainingDivergedError(
                    f"non-finite loss at episode {ep}",
                    {"episode": ep, **stats, "returns": gr.tolist(), "states": gx.tolist()},
                )
            agent.actor_opt.step(agent.actor, _clip(grads_a, agent.max_grad_norm))
            agent.critic_opt.step(agent.critic, _clip(grads_c, agent.max_grad_norm))
            batch_x, batch_a, batch_r = [], [], []
        if config.log_every and (ep + 1) % config.log_every == 0:
            recent = curve[-config.log_every:]
            log.info("episode %d  mean reward %.4f  (%.0fs)", ep + 1, float(np.mean(recent)), time.perf_counter() - t0)
        if config.time_budget is not None and time.perf_counter() - t0 > config.time_budget:
            log.warning("training stopped by time budget after %d episodes", ep + 1)
            break
    return agent, curve


# ----------------------------------------------------------------------------
# evaluation


@dataclass
class EvalSummary:
    mean_qon: float
    mean_latency: float
    mean_distance: float
    offload_ratio: float
    crash_rate: float
    episodes: list = field(default_factory=list)


def run_episode(policy: Policy, env: NavigationEnv):
    state = env.reset()
    while not env.done:
        res = env.step(policy.select(env, state))
        state = res.state
    return env.summary()


def evaluate(policy: Policy, env_factory: EnvFactory, n_episodes: int, seed: int = 0) -> EvalSummary:
    """Greedy/deterministic rollouts aggregated over ``n_episodes``."""
    rng = np.random.default_rng(seed)
    eps = [run_episode(policy, env_factory(rng, i)) for i in range(n_episodes)]
    if not eps:
        raise ValidationError("n_episodes must be positive")
    return summarize(eps)


def summarize(eps) -> EvalSummary:
    return EvalSummary(
        mean_qon=float(np.mean([e.qon for e in eps])),
        mean_latency=float(np.mean([e.mean_latency for e in eps])),
        mean_distance=float(np.mean([e.distance for e in eps])),
        offload_ratio=float(np.mean([e.offload_ratio for e in eps])),
        crash_rate=float(np.mean([e.crashed for e in eps])),
        episodes=list(eps),
    )
