"""Structured run configuration: defaults, YAML loading, and object builders.

Precedence, lowest to highest: built-in defaults, the YAML file, explicit
overrides (``a.b.c=value`` strings, as passed by ``--set`` on the CLI).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import yaml

from .allocator import OffloadRegression
from .eie import EieParams
from .env import NormCaps, SimConfig
from .errors import ValidationError
from .latency import LatencyProfile
from .metrics import CrashRule
from .navmodel import DegradationProfile, NavTable
from .traces import (
    BandwidthParams,
    BandwidthTrace,
    RouteSpec,
    RouteTrace,
    Segment,
    generate_bandwidth,
    generate_route,
)


def _layout() -> list[dict]:
    """Default route: 16 ordinary turns with three slalom hazards of rising severity.

    Slaloms hold a large sinusoidal swing whose period shrinks from hazard to
    hazard, so longer control-loop delays lose the route earlier.
    """
    rng = np.random.default_rng(2024)
    scenes = (0.0, 0.2, 0.5, 0.8, 1.0)
    slaloms = {4: 16.0, 9: 8.0, 14: 4.0}
    out: list[dict] = []
    for k in range(16):
        out.append({"kind": "straight", "length": float(rng.integers(8, 17)), "scene": float(scenes[rng.integers(0, 2)])})
        mag = float(rng.uniform(math.pi / 6, math.pi / 3)) * (1 if rng.random() < 0.5 else -1)
        out.append({
            "kind": "turn",
            "length": float(rng.integers(4, 8)),
            "turn_magnitude": round(mag, 6),
            "scene": float(scenes[rng.integers(2, 5)]),
        })
        if k in slaloms:
            period = slaloms[k]
            out.append({"kind": "straight", "length": 4.0, "scene": 0.0})
            for _ in range(2):
                out.append({"kind": "curve", "length": period, "turn_magnitude": round(math.pi / 2, 6), "scene": 0.0})
    out.append({"kind": "straight", "length": 10.0, "scene": 0.0})
    return out


def _default_config() -> dict:
    layout = _layout()
    return {
        "seed": 0,
        "route": {
            "name": "coastline-synthetic",
            "duration": float(sum(s["length"] for s in layout)),
            "frame_period": 0.05,
            "noise_scale": 0.01,
            "seed": 11,
            "p_floor": 0.05,
            "p_turn": 0.6,
            "segments": layout,
        },
        "bandwidth": [
            {"name": "B1", "kind": "markov-levels", "seed": 101, "duration": 600.0,
             "levels": [8000.0, 6000.0, 4500.0], "switch_prob": 0.05, "jitter": 0.1},
            {"name": "B2", "kind": "markov-levels", "seed": 102, "duration": 600.0,
             "levels": [4000.0, 3000.0, 2000.0], "switch_prob": 0.05, "jitter": 0.15},
            {"name": "B3", "kind": "random-walk", "seed": 103, "duration": 600.0,
             "initial": 1200.0, "step": 150.0, "min_kbps": 500.0, "max_kbps": 2000.0},
            {"name": "B4", "kind": "random-walk", "seed": 104, "duration": 600.0,
             "initial": 500.0, "step": 100.0, "min_kbps": 100.0, "max_kbps": 1000.0},
        ],
        "latency": {"fixed_overhead": 0.01, "propagation": 0.005},
        "degradation": {"complexity_gain": 3.0},
        "sim": {
            "epsilon": 0.13,
            "tau": 5.0,
            "v_max": 3.0,
            "episode_length": 100.0,
            "edge_cores": 4.0,
            "crash": {"epsilon": 0.5, "k": 3},
            "eie": {"alpha": 0.3, "beta": 0.09},
            "norm": {"c_cap": 1.0, "d_cap": 0.5, "b_max": 10000.0, "s_max": 12.0},
        },
        "train": {
            "episodes": 40000,
            "seed": 0,
            "lr": 7e-4,
            "gamma": 0.99,
            "entropy_coef": 0.01,
            "value_coef": 0.5,
            "max_grad_norm": 0.5,
            "episodes_per_update": 1,
            "n_steps": 1,
            "bootstrap_truncated": True,
            "normalize_advantage": True,
            "value_scale": None,
            "reward": "qon",
            "eie": True,
            "cores": {"p_zero": 0.1, "min": 0.5, "max": 12.0},
            "log_every": 1000,
        },
        "eval": {"seeds": [1001, 1002, 1003, 1004, 1005], "episodes_per_trace": 2},
        "fleet": {
            "lam": 8.0,
            "strategy": "network-aware",
            "h": 4.0,
            "l": 0.8,
            "allocation_period": 5.0,
            "termination": "first-crash",
            "episode_length": 100.0,
            "regression": {"a": 0.2883, "c0": -1.5527},
            "regression_levels": [100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0],
        },
    }


DEFAULT_CONFIG: dict = _default_config()


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; lists and scalars in ``override`` replace those in ``base``."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_overrides(cfg: dict, items: Iterable[str]) -> dict:
    """Apply ``dotted.key=yaml_value`` assignments."""
    cfg = copy.deepcopy(cfg)
    for item in items:
        if "=" not in item:
            raise ValidationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ValidationError(f"unknown config section {key!r}")
            node = node[p]
        node[parts[-1]] = yaml.safe_load(raw)
    return cfg


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> dict:
    cfg = default_config()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        try:
            user = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"config {path} is not valid YAML: {exc}") from None
        if not isinstance(user, dict):
            raise ValidationError("config file must hold a mapping at top level")
        cfg = merge(cfg, user)
    return apply_overrides(cfg, overrides)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def dump_config(cfg: dict, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=False))


# ----------------------------------------------------------------------------
# builders


def _run_seed(cfg: dict) -> int:
    return int(cfg.get("seed", 0) or 0)


def route_spec(cfg: dict) -> RouteSpec:
    """Route description; the top-level run ``seed`` shifts the route's noise seed."""
    r = cfg["route"]
    segs = tuple(
        Segment(s["kind"], float(s["length"]), float(s.get("turn_magnitude", 0.0)), float(s.get("scene", 0.0)))
        for s in r["segments"]
    )
    return RouteSpec(
        duration=float(r["duration"]),
        segments=segs,
        noise_scale=float(r.get("noise_scale", 0.0)),
        seed=int(r.get("seed", 0)) + _run_seed(cfg),
        frame_period=float(r.get("frame_period", 0.05)),
        p_floor=float(r.get("p_floor", 0.05)),
        p_turn=float(r.get("p_turn", 0.6)),
        name=str(r.get("name", "route")),
    )


def build_route(cfg: dict) -> RouteTrace:
    return generate_route(route_spec(cfg))


_BW_FIELDS = {f for f in BandwidthParams.__dataclass_fields__}


def build_bandwidths(cfg: dict) -> list[BandwidthTrace]:
    out = []
    for entry in cfg["bandwidth"]:
        kw = {k: v for k, v in entry.items() if k in _BW_FIELDS}
        if "levels" in kw:
            kw["levels"] = tuple(float(v) for v in kw["levels"])
        unknown = set(entry) - _BW_FIELDS - {"kind", "seed"}
        if unknown:
            raise ValidationError(f"unknown bandwidth keys {sorted(unknown)}")
        seed = int(entry.get("seed", 0)) + _run_seed(cfg)
        out.append(generate_bandwidth(entry["kind"], BandwidthParams(**kw), seed))
    if not out:
        raise ValidationError("config defines no bandwidth traces")
    return out


def build_latency(cfg: dict) -> LatencyProfile:
    lat = cfg.get("latency", {}) or {}
    kw: dict[str, Any] = {}
    if "local_compute" in lat:
        kw["local_compute"] = {int(k): float(v) for k, v in lat["local_compute"].items()}
    if "edge_cores" in lat:
        kw["edge_cores"] = tuple(lat["edge_cores"])
    if "edge_compute" in lat:
        kw["edge_compute"] = {int(k): tuple(v) for k, v in lat["edge_compute"].items()}
    if "payload_kb" in lat:
        kw["payload_kb"] = {_pair(k): float(v) for k, v in lat["payload_kb"].items()}
    for k in ("fixed_overhead", "propagation"):
        if k in lat:
            kw[k] = float(lat[k])
    return LatencyProfile(**kw)


def _pair(key) -> tuple[int, int]:
    if isinstance(key, str):
        a, b = key.replace("/", ",").split(",")
        return int(a), int(b)
    return int(key[0]), int(key[1])


def build_degradation(cfg: dict) -> DegradationProfile:
    deg = cfg.get("degradation", {}) or {}
    kw: dict[str, Any] = {}
    if "noise" in deg:
        kw["noise"] = {_pair(k): float(v) for k, v in deg["noise"].items()}
    if "bias" in deg:
        kw["bias"] = {_pair(k): float(v) for k, v in deg["bias"].items()}
    if "complexity_gain" in deg:
        kw["complexity_gain"] = float(deg["complexity_gain"])
    return DegradationProfile(**kw)


@dataclass
class Suite:
    """Everything built from one config: route, traces, profiles, and simulation defaults."""

    cfg: dict
    route: RouteTrace
    bandwidths: list[BandwidthTrace]
    latency: LatencyProfile
    degradation: DegradationProfile

    @classmethod
    def from_config(cls, cfg: dict) -> "Suite":
        return cls(cfg, build_route(cfg), build_bandwidths(cfg), build_latency(cfg), build_degradation(cfg))

    def table(self, seed: int) -> NavTable:
        return NavTable(self.route, self.degradation, seed)

    def sim_config(self, trace: int | BandwidthTrace = 0, seed: int = 0, **overrides) -> SimConfig:
        s = self.cfg["sim"]
        bw = self.bandwidths[trace] if isinstance(trace, int) else trace
        norm = s.get("norm", {})
        kw = dict(
            route=self.route,
            bandwidth=bw,
            latency_profile=self.latency,
            degradation=self.degradation,
            eie=EieParams(float(s["eie"]["alpha"]), float(s["eie"]["beta"])),
            epsilon=float(s["epsilon"]),
            tau=float(s["tau"]),
            v_max=float(s["v_max"]),
            episode_length=float(s["episode_length"]),
            seed=int(seed),
            edge_cores=float(s["edge_cores"]),
            crash_rule=CrashRule(float(s["crash"]["epsilon"]), int(s["crash"]["k"])),
            norm=NormCaps(
                float(norm.get("c_cap", 1.0)),
                float(norm.get("d_cap", 0.5)),
                None if norm.get("b_max") is None else float(norm["b_max"]),
                float(norm.get("s_max", 12.0)),
            ),
        )
        kw.update(overrides)
        return SimConfig(**kw)

    def max_route_offset(self, episode_length: float | None = None) -> float:
        length = float(self.cfg["sim"]["episode_length"]) if episode_length is None else episode_length
        # leave room for a slow final decision to land on a recorded frame
        return max(0.0, self.route.duration - length - 12.0)

    def regression(self) -> OffloadRegression:
        reg = self.cfg["fleet"]["regression"]
        return OffloadRegression(float(reg["a"]), float(reg["c0"]))
