"""Command-line entry point: ``python -m factory_urllc <command>``.

Config values can be overridden with dotted flags, e.g. ``--rl.episodes=10``.
Exit codes: 0 success, 1 config error, 2 runtime failure, 3 selfcheck failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

from . import __version__, agents, dqn, experiment, selfcheck
from .config import POLICY_NAMES, ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SELFCHECK = 0, 1, 2, 3


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factory_urllc",
        description="Multi-agent DQN resource allocation for clustered factory robots.",
        epilog="Any config value can be overridden as --section.key=value (e.g. --rl.episodes=10).",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file (defaults reproduce the paper setup)")
        p.add_argument("--output-dir", help="where CSVs, config.yaml and manifest.json go")
        p.add_argument("--seed", type=int, help="master seed")

    p = sub.add_parser("train", help="train MARL agents")
    common(p)
    p.add_argument("--policy", choices=experiment.MARL_KINDS, help="marl2 (dual APs) or marl1 (single AP)")
    p.add_argument("--checkpoint-dir", help="checkpoint directory (default: <output-dir>/checkpoints)")
    p.add_argument("--resume", action="store_true", help="continue from the saved trainer state")

    for name, helptext in (("eval", "evaluate trained MARL agents"),
                           ("baseline", "evaluate any policy, including the benchmarks")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        choices = experiment.MARL_KINDS if name == "eval" else POLICY_NAMES
        p.add_argument("--policy", choices=choices, help="policy to evaluate")
        p.add_argument("--checkpoint-dir", help="trained agent checkpoints (MARL policies)")
        p.add_argument("--payloads", type=_floats, help="comma-separated payload sizes in bytes")
        p.add_argument("--episodes", type=int, help="evaluation episodes per payload")
        p.add_argument("--workers", type=int, help=f"process pool size (default ${experiment.WORKERS_ENV})")

    p = sub.add_parser("sweep", help="policies x cluster counts x seeds x payloads")
    common(p)
    p.add_argument("--policies", default=",".join(POLICY_NAMES),
                   help="comma-separated policy names")
    p.add_argument("--payloads", type=_floats)
    p.add_argument("--clusters", type=_ints, help="comma-separated cluster counts, e.g. 4,6,8")
    p.add_argument("--seeds", type=_ints, help="comma-separated seeds")
    p.add_argument("--episodes", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("selfcheck", help="fast oracle checks of the numerical core")
    p.add_argument("--checkpoint", action="append", default=[],
                   help="also validate this checkpoint file (repeatable)")
    return parser


def _config(args, overrides):
    extra = list(overrides)
    if getattr(args, "seed", None) is not None:
        extra.append(("seed", args.seed))
    if getattr(args, "output_dir", None):
        extra.append(("output_dir", args.output_dir))
    if getattr(args, "checkpoint_dir", None):
        extra.append(("checkpoint_dir", args.checkpoint_dir))
    return load_config(args.config, extra)


def _split_overrides(extras):
    overrides, unknown = [], []
    for item in extras:
        if item.startswith("--") and "=" in item:
            overrides.append(item)
        else:
            unknown.append(item)
    return overrides, unknown


def _print_rows(rows):
    for r in rows:
        print(f"{r['policy_name']:>8}  N={r['n_clusters']}  B={r['payload_bytes']:g} bytes  "
              f"p={r['delivery_probability']:.4f}  ({r['n_episodes']} episodes, seed {r['seed']})")


def cmd_train(args, config):
    t0 = time.perf_counter()
    rewards = []
    manifest = experiment.run_train(config, config.output_dir, args.policy, args.resume,
                                    on_episode=lambda row: rewards.append(row["sum_reward"]))
    tail = rewards[-100:]
    mean = sum(tail) / len(tail) if tail else float("nan")
    print(f"trained {manifest.artifacts['policy']} for {config.rl.episodes} episodes in "
          f"{time.perf_counter() - t0:.1f} s; mean reward over last {len(tail)} episodes {mean:.1f}; "
          f"checkpoints in {manifest.artifacts['checkpoints']}")


def cmd_eval(args, config):
    policy = args.policy or (config.policy if config.policy in experiment.MARL_KINDS else "marl2")
    if args.command == "baseline" and args.policy is None:
        policy = config.policy
    if policy in experiment.MARL_KINDS and not config.checkpoint_dir:
        raise ConfigError(f"policy {policy} needs --checkpoint-dir")
    manifest = experiment.run_eval(config, policy, config.output_dir, args.payloads,
                                   config.checkpoint_dir, args.episodes, args.workers,
                                   command=args.command)
    _print_rows(manifest.rows)
    print(f"results in {manifest.artifacts['results_csv']}")


def cmd_sweep(args, config):
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    bad = [p for p in policies if p not in POLICY_NAMES]
    if bad:
        raise ConfigError(f"unknown policies: {', '.join(bad)}")
    manifest = experiment.run_sweep(config, policies, config.output_dir, args.payloads,
                                    args.clusters, args.seeds, args.episodes, args.workers)
    _print_rows(manifest.rows)
    print(f"results in {manifest.artifacts['results_csv']}")


def main(argv=None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    overrides, unknown = _split_overrides(extras)
    if unknown:
        parser.print_usage(sys.stderr)
        print(f"error: unrecognized arguments: {' '.join(unknown)}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "selfcheck":
        if overrides:
            print("error: selfcheck takes no config overrides", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK if selfcheck.run(args.checkpoint) else EXIT_SELFCHECK

    try:
        config = _config(args, overrides)
        handler = {"train": cmd_train, "eval": cmd_eval, "baseline": cmd_eval, "sweep": cmd_sweep}
        handler[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (agents.CheckpointMismatch, dqn.CheckpointError, dqn.DivergenceError,
            OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
