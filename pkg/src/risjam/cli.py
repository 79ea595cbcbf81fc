"""Command-line entry points.

  risjam train <config.toml> [--out DIR] [--seed S] [--full-scale]
  risjam eval <checkpoint_dir> <config.toml> [--steps N]
  risjam sweep <grid.toml> --figure NAME [--out DIR]
  risjam oracle-check [--instances N] [--kmax K] [--seed S]
  risjam version

Exit codes: 0 ok, 1 configuration error, 2 training divergence,
3 oracle mismatch beyond thresholds.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import __version__
from .agent import load_checkpoint
from .config import ConfigError, load_scenario, scenario_hash
from .harness import DivergenceError, evaluate, run_baseline, run_training
from .sweeps import FIGURES, load_grid, sweep

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGENCE = 2
EXIT_ORACLE = 3


def _cmd_train(args) -> int:
    scenario = load_scenario(args.config)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.full_scale:
        scenario = replace(scenario, td3=replace(scenario.td3, episodes=400,
                                                 steps_per_episode=200))
    out = args.out or f"runs/{scenario.name}-{scenario_hash(scenario)}"
    try:
        if scenario.kind in ("psd-td3", "psd-ddpg"):
            log, _ = run_training(scenario, out_dir=out)
        else:
            log = run_baseline(scenario, out_dir=out)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    print(f"{scenario.kind} {scenario.name}: {len(log.episodes)} episodes, "
          f"mean reward {log.mean_reward():.3f} bits/symbol -> {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    scenario = load_scenario(args.config)
    params = None
    if scenario.kind in ("psd-td3", "psd-ddpg"):
        params, meta = load_checkpoint(args.checkpoint, scenario.td3)
        print(f"loaded checkpoint from episode {meta.get('episode')}")
    res = evaluate(scenario, params, steps=args.steps)
    print(f"eval {scenario.kind}: mean rate {res.mean_rate:.3f} "
          f"+- {res.std_rate:.3f} bits/symbol over {res.n_steps} steps "
          f"(class-1 {res.mean_rate_q1:.3f}, class-2 {res.mean_rate_q2:.3f})")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    grid = load_grid(args.grid)
    if args.figure and args.figure != grid.figure:
        raise ConfigError(f"grid file declares figure {grid.figure!r}, "
                          f"--figure asked for {args.figure!r}")
    path = sweep(grid, args.out)
    print(f"sweep {grid.figure}: wrote {path}")
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    from .validation import run_oracle_check
    stats = run_oracle_check(n_instances=args.instances, kmax=args.kmax,
                             seed=args.seed)
    for line in stats.summary_lines():
        print(line)
    ok = stats.exact_fraction >= 0.80 and stats.within_quantum_fraction >= 0.95
    if not ok:
        print("oracle-check FAILED thresholds (>= 80% exact, >= 95% within one quantum)",
              file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risjam", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a learning scenario (or log a baseline)")
    t.add_argument("config")
    t.add_argument("--out", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--full-scale", action="store_true",
                   help="400 episodes x 200 steps instead of the config values")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint without exploration noise")
    e.add_argument("checkpoint")
    e.add_argument("config")
    e.add_argument("--steps", type=int, default=None)
    e.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("sweep", help="run a figure grid and emit its CSV")
    s.add_argument("grid")
    s.add_argument("--figure", choices=FIGURES, default=None)
    s.add_argument("--out", default="sweeps")
    s.set_defaults(fn=_cmd_sweep)

    o = sub.add_parser("oracle-check",
                       help="compare the scheduler against exhaustive enumeration")
    o.add_argument("--instances", type=int, default=200)
    o.add_argument("--kmax", type=int, default=4)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(fn=_cmd_oracle_check)

    v = sub.add_parser("version")
    v.set_defaults(fn=lambda a: (print(__version__), EXIT_OK)[1])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
