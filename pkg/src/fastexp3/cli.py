"""Command-line entry point.

Subcommands: regret, bench, accept-rate, table1, export-env. Every
subcommand accepts --config PATH (flat key = value file) and flag overrides;
flags win over the file. Exit codes: 0 success, 2 validation failure,
1 IO error.
"""

from __future__ import annotations

import argparse
import sys

from .exp3 import BACKENDS
from .harness import (
    ALGORITHMS,
    DEFAULT_BENCH_KS,
    ConfigError,
    build_config,
    cmd_accept_rate,
    cmd_bench,
    cmd_export_env,
    cmd_regret,
    cmd_table1,
    parse_config_file,
)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--seed", type=int, help="run a single seed N")
    sub.add_argument("--seeds", help="comma-separated seed list, or range:N")
    sub.add_argument("--out", help="output path (default: print to stdout)")
    sub.add_argument("--backend", choices=BACKENDS)
    sub.add_argument("--k", type=int, help="number of arms")
    sub.add_argument("--t", type=int, help="number of rounds")
    sub.add_argument("--env", help="bernoulli:<means>|bernoulli_gap:<g>|adaptive:target_most_pulled|replay:<path>")
    sub.add_argument("--env-seed", type=int, dest="env_seed")
    sub.add_argument("--workers", type=int, help="seed-parallel worker count (0 = auto)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fastexp3",
        description="Adversarial-bandit experiment harness (EXP3/EXP4, pluggable sampling backends).",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_regret = subs.add_parser("regret", help="pseudo-regret over seeds, CSV with summary row")
    _add_common(p_regret)
    p_regret.add_argument("--algorithm", choices=ALGORITHMS)
    p_regret.add_argument("--checkpoints", type=int)
    p_regret.add_argument("--rebuild-period", type=int, dest="rebuild_period")
    p_regret.add_argument("--oracle", help="exp4 oracle: identity or partition:<path>")
    p_regret.add_argument("--timing", action="store_const", const=True,
                          help="include wall-clock column (breaks byte reproducibility)")

    p_bench = subs.add_parser("bench", help="per-round latency sweep over K and backends")
    _add_common(p_bench)
    p_bench.add_argument("--k-list", dest="k_list",
                         help=f"comma-separated K values (default {','.join(map(str, DEFAULT_BENCH_KS))})")
    p_bench.add_argument("--rounds", type=int, default=100_000, help="rounds per cell")
    p_bench.add_argument("--warmup", type=int, default=1000)
    p_bench.add_argument("--backends", help="comma-separated backend subset")

    p_accept = subs.add_parser("accept-rate", help="rejection-sampling attempts per block, CSV")
    _add_common(p_accept)
    p_accept.add_argument("--rebuild-period", type=int, dest="rebuild_period")

    p_table = subs.add_parser("table1", help="measured latency/regret summary across algorithms")
    _add_common(p_table)
    p_table.add_argument("--bench-k", type=int, default=4096, dest="bench_k")
    p_table.add_argument("--bench-rounds", type=int, default=30_000, dest="bench_rounds")

    p_export = subs.add_parser("export-env", help="write an environment's loss table as replayable CSV")
    _add_common(p_export)

    return parser


_CFG_KEYS = ("out", "backend", "k", "t", "env", "env_seed", "workers", "algorithm",
             "checkpoints", "rebuild_period", "oracle", "timing")


def _config_from_args(args: argparse.Namespace, defaults: dict | None = None):
    """Precedence: built-in defaults < `defaults` < config file < flags."""
    file_values = dict(parse_config_file(args.config)) if args.config else {}
    for key, value in (defaults or {}).items():
        file_values.setdefault(key, value)
    overrides = {key: getattr(args, key, None) for key in _CFG_KEYS}
    if args.seed is not None and args.seeds is not None:
        raise ConfigError("--seed and --seeds are mutually exclusive")
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    elif args.seeds is not None:
        overrides["seeds"] = args.seeds
    return build_config(file_values, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "regret":
            cfg = _config_from_args(args)
            text = cmd_regret(cfg)
            if not cfg.out:
                sys.stdout.write(text)
        elif args.command == "bench":
            cfg = _config_from_args(args, defaults={"algorithm": "exp3-fixed"})
            k_list = ([int(x) for x in args.k_list.split(",")]
                      if args.k_list else list(DEFAULT_BENCH_KS))
            if args.backends:
                backends = tuple(args.backends.split(","))
            elif args.backend:
                backends = (args.backend,)
            else:
                backends = BACKENDS
            for b in backends:
                if b not in BACKENDS:
                    raise ConfigError(f"unknown backend {b!r}")
            text = cmd_bench(k_list, args.rounds, backends, warmup=args.warmup,
                             seed=cfg.seeds[0], out=cfg.out, config_hash=cfg.config_hash())
            if not cfg.out:
                sys.stdout.write(text)
        elif args.command == "accept-rate":
            cfg = _config_from_args(args, defaults={"algorithm": "exp3-fixed",
                                                    "backend": "alias_snapshot"})
            text = cmd_accept_rate(cfg)
            if not cfg.out:
                sys.stdout.write(text)
        elif args.command == "table1":
            cfg = _config_from_args(args)
            text = cmd_table1(cfg, bench_k=args.bench_k, bench_rounds=args.bench_rounds)
            if not cfg.out:
                sys.stdout.write(text)
        elif args.command == "export-env":
            cfg = _config_from_args(args)
            path = cmd_export_env(cfg)
            sys.stderr.write(f"wrote {path}\n")
    except ConfigError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"io error: {exc}\n")
        return 1
    return 0


def entry() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
