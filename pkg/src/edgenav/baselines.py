"""Fixed and latency-greedy reference policies."""

from __future__ import annotations

from dataclasses import dataclass

from .actions import EDGE, Action
from .env import NavigationEnv, SchedulerState
from .errors import ValidationError
from .latency import LatencyProfile, end_to_end

BASELINE_KINDS = ("local", "offload", "dynamic")


@dataclass(frozen=True)
class BaselinePolicy:
    kind: str
    fixed_r: int = 448
    fixed_j: int = 95

    def __post_init__(self) -> None:
        if self.kind not in BASELINE_KINDS:
            raise ValidationError(f"baseline kind must be one of {BASELINE_KINDS}, got {self.kind!r}")

    @property
    def name(self) -> str:
        return self.kind

    @property
    def local_action(self) -> Action:
        return Action(self.fixed_r)

    @property
    def edge_action(self) -> Action:
        return Action(self.fixed_r, EDGE, self.fixed_j)

    def select(self, env: NavigationEnv, state: SchedulerState) -> Action:
        return decide(self, state, env.config.latency_profile, state.b, state.s)


def decide(policy: BaselinePolicy, state: SchedulerState | None, profile: LatencyProfile, bandwidth: float, cores: float) -> Action:
    """Local and Offload ignore their inputs; Dynamic picks the lower estimated latency (ties go local)."""
    if policy.kind == "local":
        return policy.local_action
    if policy.kind == "offload":
        return policy.edge_action
    local = policy.local_action
    if not cores > 0 or not bandwidth > 0:
        return local
    edge = policy.edge_action
    if end_to_end(profile, edge, bandwidth, cores) < end_to_end(profile, local, bandwidth, cores):
        return edge
    return local
