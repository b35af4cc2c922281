"""Command-line front end.

Every command takes ``--config`` (YAML, merged over the built-in defaults),
``--seed`` (shifts every generator seed in the config) and ``--out`` (output
directory).  ``--set key.path=value`` overrides single config keys and wins
over the file.  Outputs are CSV files plus ``manifest.json``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.  The log level is
read from ``EDGENAV_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .allocator import fit_regression, load_regression_samples, save_regression_samples
from .baselines import BASELINE_KINDS, BaselinePolicy
from .config import Suite, config_hash, load_config
from .errors import EdgeNavError, ValidationError
from .experiments import (
    TableCache,
    agent_policy,
    evaluation_factory,
    eval_episodes,
    fleet_config,
    latency_sweep,
    regression_samples,
    train_agent,
)
from .fleet import run_fleet, write_fleet_csv
from .allocator import write_allocation_log
from .scheduler import A2cAgent, Policy
from .traces import save_bandwidth_trace, save_route_trace

log = logging.getLogger("edgenav")

LOG_ENV = "EDGENAV_LOG_LEVEL"
SUMMARY_HEADER = ("policy", "v_max", "eval_seed", "mean_qon", "mean_latency", "mean_distance", "offload_ratio", "crash_rate")
DECISION_HEADER = ("v_max", "eval_seed", "episode", "t_capture", "t_decide", "theta_pre", "theta_gt", "p_pre", "action", "latency")


def _fmt(x: float) -> str:
    return repr(float(x))


class Run:
    """Output directory + manifest bookkeeping for one command."""

    def __init__(self, args: argparse.Namespace, command: str) -> None:
        self.cfg = load_config(args.config, args.set or [])
        self.cfg["seed"] = int(args.seed)
        self.seed = int(args.seed)
        self.out = Path(args.out)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            probe = self.out / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ValidationError(f"output directory {self.out} is not writable: {exc}") from None
        self.command = command
        self.options: dict = {}
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def write_csv(self, name: str, header: Sequence[str], rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config_hash": config_hash(self.cfg),
            "seed": self.seed,
            "options": self.options,
            "outputs": sorted(self.outputs),
            "versions": {
                "edgenav": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _policy(args: argparse.Namespace) -> Policy:
    if args.policy in BASELINE_KINDS:
        return BaselinePolicy(args.policy)
    if args.policy in ("checkpoint", "agent"):
        if not args.checkpoint:
            raise ValidationError("--policy checkpoint needs --checkpoint PATH")
        return agent_policy(A2cAgent.load(args.checkpoint))
    raise ValidationError(f"unknown policy {args.policy!r}")


# ----------------------------------------------------------------------------
# commands


def cmd_gen_traces(args: argparse.Namespace) -> None:
    run = Run(args, "gen-traces")
    suite = Suite.from_config(run.cfg)
    save_route_trace(suite.route, run.path("route.csv"))
    for trace in suite.bandwidths:
        save_bandwidth_trace(trace, run.path(f"bandwidth_{trace.name}.csv"))
    run.finish()


def cmd_train(args: argparse.Namespace) -> None:
    run = Run(args, "train")
    if args.episodes is not None:
        run.cfg["train"]["episodes"] = int(args.episodes)
    if args.episodes is not None and args.episodes < 0:
        raise ValidationError("--episodes must be non-negative")
    reward = args.reward or run.cfg["train"].get("reward", "qon")
    eie = not args.no_eie and bool(run.cfg["train"].get("eie", True))
    run.options = {"episodes": int(run.cfg["train"]["episodes"]), "reward": reward, "eie": eie}
    suite = Suite.from_config(run.cfg)
    agent, curve = train_agent(suite, reward=reward, eie=eie)
    agent.save(run.path("checkpoint.npz"), {"config_hash": config_hash(run.cfg), "seed": run.seed})
    run.write_csv("curve.csv", ("episode", "mean_reward"), ((i, _fmt(v)) for i, v in enumerate(curve)))
    run.finish()


def cmd_eval(args: argparse.Namespace) -> None:
    run = Run(args, "eval")
    policy = _policy(args)
    suite = Suite.from_config(run.cfg)
    cache = TableCache(suite)
    v_list = [float(v) for v in args.vmax.split(",")] if args.vmax else [float(run.cfg["sim"]["v_max"])]
    if any(not v > 0 for v in v_list):
        raise ValidationError("--vmax values must be positive")
    seeds = [int(s) for s in (args.eval_seeds.split(",") if args.eval_seeds else run.cfg["eval"]["seeds"])]
    run.options = {"policy": args.policy, "checkpoint": args.checkpoint, "vmax": v_list, "eval_seeds": seeds}
    summary_rows, decision_rows = [], []
    n_eps = eval_episodes(suite)
    for v in v_list:
        for es in seeds:
            make = evaluation_factory(suite, es, cache, v_max=v)
            rng = np.random.default_rng(es)
            eps = []
            for i in range(n_eps):
                env = make(rng, i)
                state = env.reset()
                while not env.done:
                    state = env.step(policy.select(env, state)).state
                eps.append(env.summary())
                for res in env.history:
                    for r in res.info.records:
                        decision_rows.append((
                            _fmt(v), es, i, _fmt(r.t_capture), _fmt(r.t_decide), _fmt(r.theta_pre),
                            _fmt(r.theta_gt), _fmt(r.p_pre), str(r.action), _fmt(r.latency),
                        ))
            summary_rows.append((
                getattr(policy, "name", args.policy), _fmt(v), es,
                _fmt(np.mean([e.qon for e in eps])),
                _fmt(np.mean([e.mean_latency for e in eps])),
                _fmt(np.mean([e.distance for e in eps])),
                _fmt(np.mean([e.offload_ratio for e in eps])),
                _fmt(np.mean([e.crashed for e in eps])),
            ))
    run.write_csv("summary.csv", SUMMARY_HEADER, summary_rows)
    run.write_csv("decisions.csv", DECISION_HEADER, decision_rows)
    run.finish()


def cmd_fleet(args: argparse.Namespace) -> None:
    run = Run(args, "fleet")
    policy = _policy(args)
    suite = Suite.from_config(run.cfg)
    if args.regression:
        reg = json.loads(Path(args.regression).read_text())
        run.cfg["fleet"]["regression"] = {"a": float(reg["a"]), "c0": float(reg["c0"])}
    fc = fleet_config(suite, lam=args.lam, strategy=args.strategy, n_drones=args.drones, seed=run.seed)
    run.options = {"policy": args.policy, "strategy": fc.strategy, "lam": fc.lam, "drones": len(fc.drones)}
    result = run_fleet(fc, policy)
    write_fleet_csv(result, run.path("fleet.csv"))
    write_allocation_log(result.allocations, run.path("allocations.csv"))
    run.write_csv(
        "fleet_summary.csv",
        ("drone", "qon", "mean_latency", "distance", "offload_ratio", "crashed"),
        [(i, _fmt(s.qon), _fmt(s.mean_latency), _fmt(s.distance), _fmt(s.offload_ratio), int(s.crashed))
         for i, s in enumerate(result.summaries)]
        + [("mean", _fmt(result.mean_qon), _fmt(result.mean_latency), _fmt(result.mean_distance),
            _fmt(result.mean_offload_ratio), int(any(result.crashed)))],
    )
    run.finish()


def cmd_collect_samples(args: argparse.Namespace) -> None:
    run = Run(args, "collect-samples")
    policy = _policy(args)
    suite = Suite.from_config(run.cfg)
    samples = regression_samples(suite, policy)
    save_regression_samples(samples, run.path("samples.csv"))
    run.options = {"policy": args.policy, "checkpoint": args.checkpoint}
    run.finish()


def cmd_fit_regression(args: argparse.Namespace) -> None:
    run = Run(args, "fit-regression")
    samples = load_regression_samples(args.samples)
    model = fit_regression(samples)
    run.options = {"samples": str(args.samples)}
    coeffs = {"a": model.a, "c0": model.c0, "f_min": model.f_min, "f_max": model.f_max}
    (run.out / "regression.json").write_text(json.dumps(coeffs, indent=2, sort_keys=True) + "\n")
    run.outputs.append("regression.json")
    run.write_csv("regression.csv", ("a", "c0", "f_min", "f_max"), [tuple(_fmt(v) for v in coeffs.values())])
    run.finish()


def cmd_latency_sweep(args: argparse.Namespace) -> None:
    run = Run(args, "latency-sweep")
    suite = Suite.from_config(run.cfg)
    lats = [float(v) for v in args.latencies.split(",")]
    seeds = [int(s) for s in args.nav_seeds.split(",")]
    run.options = {"latencies": lats, "nav_seeds": seeds}
    rows = []
    for s in seeds:
        for r in latency_sweep(suite, lats, s):
            rows.append((s, _fmt(r.latency), _fmt(r.qon), _fmt(r.distance), int(r.crashed), _fmt(r.elapsed)))
    run.write_csv("sweep.csv", ("nav_seed", "latency", "qon", "distance", "crashed", "elapsed"), rows)
    run.finish()


# ----------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgenav", description="Edge-assisted drone navigation scheduling simulator.")
    p.add_argument("--version", action="version", version=f"edgenav {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="YAML config merged over the defaults")
        sp.add_argument("--seed", type=int, default=0, help="run seed (shifts all generator seeds)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    def policy_args(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--policy", default="checkpoint", choices=list(BASELINE_KINDS) + ["checkpoint", "agent"])
        sp.add_argument("--checkpoint", help="trained agent (.npz) for --policy checkpoint")

    sp = sub.add_parser("gen-traces", help="write the route and bandwidth traces as CSV")
    common(sp)
    sp.set_defaults(func=cmd_gen_traces)

    sp = sub.add_parser("train", help="train the A2C scheduler")
    common(sp)
    sp.add_argument("--episodes", type=int, help="training episodes (default from config)")
    sp.add_argument("--reward", choices=["qon", "latency"], help="reward signal")
    sp.add_argument("--no-eie", action="store_true", help="observe raw (theta, p) instead of (c, d)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a trained agent or a baseline")
    common(sp)
    policy_args(sp)
    sp.add_argument("--vmax", help="comma-separated maximum speeds; one summary row each")
    sp.add_argument("--eval-seeds", help="comma-separated evaluation seeds (default from config)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("fleet", help="multi-drone run over a shared edge pool")
    common(sp)
    policy_args(sp)
    sp.add_argument("--strategy", help="network-aware (alias a3d) | even | agnostic | no-bounds")
    sp.add_argument("--lam", type=float, help="total edge cores")
    sp.add_argument("--drones", type=int, help="number of drones (default: one per bandwidth trace)")
    sp.add_argument("--regression", help="regression.json from fit-regression")
    sp.set_defaults(func=cmd_fleet)

    sp = sub.add_parser("collect-samples", help="offloading ratio vs pinned bandwidth for a policy")
    common(sp)
    policy_args(sp)
    sp.set_defaults(func=cmd_collect_samples)

    sp = sub.add_parser("fit-regression", help="fit the bandwidth -> offloading-ratio regression")
    common(sp)
    sp.add_argument("--samples", required=True, help="CSV with bandwidth_kbps,offloading_ratio")
    sp.set_defaults(func=cmd_fit_regression)

    sp = sub.add_parser("latency-sweep", help="whole-route flights under forced uniform latencies")
    common(sp)
    sp.add_argument("--latencies", default="0,0.25,0.5,1.0")
    sp.add_argument("--nav-seeds", default="0,1,2,3,4,5,6,7,8,9")
    sp.set_defaults(func=cmd_latency_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; here bad input is 1
        return 0 if exc.code in (0, None) else 1
    try:
        args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EdgeNavError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
