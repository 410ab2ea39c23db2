"""Experiment harness: regret curves, acceptance rates, latency benchmarks.

Runs are configured by a flat key-value config file plus CLI overrides
(flags win), fan out over seeds in a process pool, and land in CSV with a
config-hash column so every result row is traceable to the configuration
that produced it. Environment randomness and player randomness come from
separate streams, so backend comparisons hold the loss tables fixed.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .anytime import DelayedUpdateEngine, DoublingWrapper, FtrlAnytimeEngine
from .core import short_horizon_threshold
from .environments import (
    BernoulliEnv,
    RegretLedger,
    ReplayEnv,
    TargetMostPulledEnv,
    export_loss_table,
)
from .exp3 import BACKENDS, Exp3Engine
from .exp4 import Exp4Engine, IdentityOracle, PartitionOracle

ALGORITHMS = ("exp3-fixed", "doubling", "ftrl", "delayed", "exp4")

DEFAULT_BENCH_KS = (256, 4096, 65536)


class ConfigError(ValueError):
    """Invalid experiment configuration (bad key, value, or referenced file)."""


@dataclass
class ExperimentConfig:
    algorithm: str = "exp3-fixed"
    backend: str = "segtree"
    k: int = 10
    t: int = 50000
    env: str = "bernoulli_gap:0.1"
    env_seed: int = 424242
    seeds: tuple = tuple(range(20))
    rebuild_period: int = 0  # 0 means "use K"
    work_budget: int = 4
    checkpoints: int = 10
    oracle: str = "identity"
    timing: bool = False  # include wall-clock column (breaks byte reproducibility)
    workers: int = 0  # 0 means auto
    out: str = ""

    def validate(self) -> "ExperimentConfig":
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")
        if not isinstance(self.k, int) or self.k < 2:
            raise ConfigError("k must be an integer >= 2")
        if not isinstance(self.t, int) or self.t < 1:
            raise ConfigError("t must be an integer >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.checkpoints < 1:
            raise ConfigError("checkpoints must be >= 1")
        if self.rebuild_period < 0:
            raise ConfigError("rebuild_period must be >= 0")
        if self.work_budget < 1:
            raise ConfigError("work_budget must be >= 1")
        parse_env_spec(self.env, self.k)  # raises ConfigError on bad spec
        if self.env.startswith("replay:"):
            path = self.env.split(":", 1)[1]
            if not os.path.exists(path):
                raise ConfigError(f"replay file not found: {path}")
        if self.algorithm == "exp4":
            if self.oracle != "identity" and not self.oracle.startswith("partition:"):
                raise ConfigError(f"unknown oracle {self.oracle!r}")
            if self.oracle.startswith("partition:"):
                path = self.oracle.split(":", 1)[1]
                if not os.path.exists(path):
                    raise ConfigError(f"partition file not found: {path}")
        return self

    def config_hash(self) -> str:
        """Hash of the semantic fields (not output paths or worker counts)."""
        semantic = (
            f"algorithm={self.algorithm};backend={self.backend};k={self.k};t={self.t};"
            f"env={self.env};env_seed={self.env_seed};seeds={','.join(map(str, self.seeds))};"
            f"rebuild_period={self.rebuild_period};work_budget={self.work_budget};"
            f"checkpoints={self.checkpoints};oracle={self.oracle}"
        )
        return hashlib.sha256(semantic.encode()).hexdigest()[:12]


_INT_KEYS = {"k", "t", "env_seed", "rebuild_period", "work_budget", "checkpoints", "workers"}
_BOOL_KEYS = {"timing"}


def _parse_seeds(value: str) -> tuple:
    value = value.strip()
    if value.startswith("range:"):
        n = int(value.split(":", 1)[1])
        if n < 1:
            raise ConfigError("seed range must be >= 1")
        return tuple(range(n))
    try:
        return tuple(int(s) for s in value.split(",") if s.strip() != "")
    except ValueError:
        raise ConfigError(f"cannot parse seeds {value!r}") from None


def parse_config_file(path) -> dict:
    """Flat 'key = value' lines; '#' comments; unknown keys rejected."""
    known = set(ExperimentConfig.__dataclass_fields__)
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip().lower().replace("-", "_")
            value = value.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    return values


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge config-file values with CLI overrides; overrides win."""
    cfg = ExperimentConfig()
    merged: dict = dict(file_values or {})
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    for key, value in merged.items():
        if isinstance(value, str):
            if key == "seeds":
                value = _parse_seeds(value)
            elif key in _INT_KEYS:
                try:
                    value = int(value)
                except ValueError:
                    raise ConfigError(f"config key {key!r} expects an integer, got {value!r}") from None
            elif key in _BOOL_KEYS:
                if value.lower() not in ("true", "false", "0", "1", "yes", "no"):
                    raise ConfigError(f"config key {key!r} expects a boolean, got {value!r}")
                value = value.lower() in ("true", "1", "yes")
        elif key == "seeds" and isinstance(value, (list, tuple)):
            value = tuple(int(s) for s in value)
        setattr(cfg, key, value)
    return cfg.validate()


def parse_env_spec(spec: str, K: int):
    """Split an environment spec string into (kind, payload)."""
    kind, _, payload = spec.partition(":")
    if kind == "bernoulli":
        try:
            means = [float(x) for x in payload.split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse bernoulli means {payload!r}") from None
        if len(means) == 1:
            means = means * K
        if len(means) != K:
            raise ConfigError(f"bernoulli spec has {len(means)} means but k={K}")
        if any(not 0.0 <= m <= 1.0 for m in means):
            raise ConfigError("bernoulli means must lie in [0, 1]")
        return "bernoulli", means
    if kind == "bernoulli_gap":
        try:
            gap = float(payload)
        except ValueError:
            raise ConfigError(f"cannot parse gap {payload!r}") from None
        if not 0.0 <= gap <= 0.5:
            raise ConfigError("gap must lie in [0, 0.5]")
        return "bernoulli", [0.5 - gap] + [0.5] * (K - 1)
    if kind == "adaptive":
        if payload != "target_most_pulled":
            raise ConfigError(f"unknown adaptive strategy {payload!r}")
        return "adaptive", payload
    if kind == "replay":
        if not payload:
            raise ConfigError("replay spec needs a path: replay:<path>")
        return "replay", payload
    raise ConfigError(f"unknown environment spec {spec!r}")


def make_env(cfg: ExperimentConfig, player_seed: int):
    kind, payload = parse_env_spec(cfg.env, cfg.k)
    if kind == "bernoulli":
        # Pairing the stream with the player seed gives every run an
        # independent realization while keeping it fixed across backends.
        return BernoulliEnv(cfg.k, payload, seed=[cfg.env_seed, player_seed])
    if kind == "adaptive":
        return TargetMostPulledEnv(cfg.k)
    env = ReplayEnv(payload)
    if env.K != cfg.k:
        raise ConfigError(f"replay table has K={env.K} but config says k={cfg.k}")
    if env.T < cfg.t:
        raise ConfigError(f"replay table has only {env.T} rounds but config says t={cfg.t}")
    return env


class _Exp4Player:
    def __init__(self, engine: Exp4Engine, oracle):
        self.engine = engine
        self.oracle = oracle
        self.rebuild_count = 0

    def step(self, env):
        rec = self.engine.step(env, self.oracle)
        self.rebuild_count = self.engine.rebuild_count
        return rec


def make_player(cfg: ExperimentConfig, seed: int):
    period = cfg.rebuild_period if cfg.rebuild_period else None
    if cfg.algorithm == "exp3-fixed":
        return Exp3Engine(cfg.k, cfg.t, backend=cfg.backend, seed=seed,
                          rebuild_period=period, work_budget=cfg.work_budget)
    if cfg.algorithm == "doubling":
        return DoublingWrapper(cfg.k, backend=cfg.backend, seed=seed,
                               rebuild_period=period, work_budget=cfg.work_budget)
    if cfg.algorithm == "ftrl":
        return FtrlAnytimeEngine(cfg.k, seed=seed)
    if cfg.algorithm == "delayed":
        return DelayedUpdateEngine(cfg.k, backend=cfg.backend, seed=seed,
                                   work_budget=cfg.work_budget)
    if cfg.algorithm == "exp4":
        if cfg.oracle == "identity":
            oracle = IdentityOracle(cfg.k)
            n_experts = cfg.k
        else:
            oracle = PartitionOracle.from_file(cfg.oracle.split(":", 1)[1])
            n_experts = oracle.N
            if int(oracle.table.max()) >= cfg.k:
                raise ConfigError("partition oracle recommends arms outside [0, k)")
        engine = Exp4Engine(n_experts, cfg.t, backend=cfg.backend, seed=seed,
                            rebuild_period=period, work_budget=cfg.work_budget)
        return _Exp4Player(engine, oracle)
    raise ConfigError(f"unknown algorithm {cfg.algorithm!r}")


def checkpoint_rounds(T: int, n: int) -> list[int]:
    """n round indices, evenly spaced, always ending at T."""
    marks = sorted({max(1, round(T * i / n)) for i in range(1, n + 1)} | {T})
    return marks


@dataclass
class SeedRun:
    seed: int
    rows: list = field(default_factory=list)  # (t, regret, mean_attempts, rebuilds, mean_ns)
    attempts: np.ndarray | None = None


def run_seed(cfg: ExperimentConfig, seed: int, keep_attempts: bool = False) -> SeedRun:
    """Play one seed for cfg.t rounds, checkpointing pseudo-regret."""
    env = make_env(cfg, seed)
    player = make_player(cfg, seed)
    ledger = RegretLedger(cfg.k)
    marks = set(checkpoint_rounds(cfg.t, cfg.checkpoints))
    run = SeedRun(seed)
    attempts_log = np.empty(cfg.t, dtype=np.int64) if keep_attempts else None
    attempts_sum = 0
    ns_sum = 0
    for t in range(1, cfg.t + 1):
        rec = player.step(env)
        ledger.record(rec.arm, env.full_loss_vector(t))
        attempts_sum += rec.attempts
        ns_sum += rec.elapsed_ns
        if keep_attempts:
            attempts_log[t - 1] = rec.attempts
        if t in marks:
            run.rows.append((
                t,
                ledger.pseudo_regret,
                attempts_sum / t,
                getattr(player, "rebuild_count", 0),
                ns_sum / t,
            ))
    run.attempts = attempts_log
    return run


def _seed_task(args):
    cfg_dict, seed, keep_attempts = args
    cfg = ExperimentConfig(**cfg_dict)
    return run_seed(cfg, seed, keep_attempts)


def map_seeds(cfg: ExperimentConfig, keep_attempts: bool = False) -> list[SeedRun]:
    """Run every configured seed, in parallel when workers allow."""
    seeds = list(cfg.seeds)
    w = cfg.workers if cfg.workers else min(len(seeds), os.cpu_count() or 1, 8)
    if w <= 1 or len(seeds) == 1:
        return [run_seed(cfg, s, keep_attempts) for s in seeds]
    tasks = [(asdict(cfg), s, keep_attempts) for s in seeds]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(_seed_task, tasks))


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_out(text: str, out: str) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def regret_bound_denominator(K: int, T: int) -> float:
    return math.sqrt(K * T * math.log(K))


def cmd_regret(cfg: ExperimentConfig) -> str:
    """Per-seed, per-checkpoint pseudo-regret plus a mean/stderr/coefficient summary.

    Output is byte-reproducible for a fixed config unless timing=true, which
    adds wall-clock means.
    """
    cfg.validate()
    runs = map_seeds(cfg)
    h = cfg.config_hash()
    lines = ["config_hash,row_type,seed,t,pseudo_regret,regret_stderr,regret_coeff,mean_attempts,rebuild_count,mean_round_ns"]
    for run in runs:
        for t, regret, mean_attempts, rebuilds, mean_ns in run.rows:
            lines.append(",".join([
                h, "seed", str(run.seed), str(t), _fmt(regret), "", "",
                _fmt(mean_attempts), str(int(rebuilds)),
                _fmt(mean_ns) if cfg.timing else "",
            ]))
    finals = np.array([run.rows[-1][1] for run in runs])
    mean = float(finals.mean())
    stderr = float(finals.std(ddof=1) / math.sqrt(len(finals))) if len(finals) > 1 else 0.0
    coeff = mean / regret_bound_denominator(cfg.k, cfg.t)
    lines.append(",".join([
        h, "summary", "", str(cfg.t), _fmt(mean), _fmt(stderr), _fmt(coeff), "", "", "",
    ]))
    text = "\n".join(lines) + "\n"
    _write_out(text, cfg.out)
    return text


def cmd_accept_rate(cfg: ExperimentConfig) -> str:
    """Per-block mean/max rejection-sampling attempts for the snapshot backend."""
    cfg.validate()
    if cfg.algorithm != "exp3-fixed":
        raise ConfigError("accept-rate measures the exp3-fixed algorithm")
    if cfg.backend != "alias_snapshot":
        raise ConfigError("accept-rate requires backend=alias_snapshot")
    regime_ok = cfg.t >= short_horizon_threshold(cfg.k)
    note = "" if regime_ok else f"regime_warning:T<2KlnK~{short_horizon_threshold(cfg.k):.0f}"
    runs = map_seeds(cfg, keep_attempts=True)
    h = cfg.config_hash()
    period = cfg.rebuild_period if cfg.rebuild_period else cfg.k
    lines = ["config_hash,row_type,seed,block,t_start,t_end,mean_attempts,max_attempts,note"]
    all_means = []
    global_max = 0
    total_attempts = 0
    for run in runs:
        att = run.attempts
        n_blocks = -(-cfg.t // period)
        for b in range(n_blocks):
            lo = b * period
            hi = min((b + 1) * period, cfg.t)
            blk = att[lo:hi]
            m = float(blk.mean())
            all_means.append(m)
            global_max = max(global_max, int(blk.max()))
            lines.append(",".join([
                h, "block", str(run.seed), str(b + 1), str(lo + 1), str(hi),
                _fmt(m), str(int(blk.max())), "",
            ]))
        total_attempts += int(att.sum())
        lines.append(",".join([
            h, "seed_summary", str(run.seed), "", "1", str(cfg.t),
            _fmt(float(att.mean())), str(int(att.max())), "",
        ]))
    global_mean = total_attempts / (cfg.t * len(runs))
    lines.append(",".join([
        h, "summary", "", "", "1", str(cfg.t), _fmt(global_mean), str(global_max), note,
    ]))
    text = "\n".join(lines) + "\n"
    _write_out(text, cfg.out)
    return text


class _BenchEnv:
    """Constant-per-round loss vector read from a precomputed array.

    Assigning the same loss to every arm in a round is a legal oblivious
    adversary, and it keeps the per-round cost independent of K so the
    timed loop measures only the engine.
    """

    def __init__(self, losses):
        self.losses = losses
        self.observe_count = 0

    def observe(self, t: int, arm: int) -> float:
        self.observe_count += 1
        return self.losses[t - 1]

    def full_loss_vector(self, t: int):  # pragma: no cover - not used in timing
        raise RuntimeError("bench environment serves scalars only")


def bench_one(K: int, backend: str, rounds: int, warmup: int = 1000, seed: int = 0) -> dict:
    """Median and p99 per-round latency for one (K, backend) cell.

    Losses are materialized before the timed loop; the environment call
    counter is asserted unchanged across it.
    """
    if rounds <= warmup:
        raise ValueError("rounds must exceed warmup")
    gen = np.random.default_rng([seed, K])
    env = _BenchEnv(gen.random(rounds).tolist())
    losses = [env.observe(t, 0) for t in range(1, rounds + 1)]
    calls_before = env.observe_count
    # Horizon chosen so the fixed learning rate sits in the regime where the
    # rejection sampler's attempt bound applies even for large K.
    horizon = max(rounds, int(math.ceil(short_horizon_threshold(K))))
    engine = Exp3Engine(K, horizon, backend=backend, seed=seed, warn_short_horizon=False)
    samples = np.empty(rounds, dtype=np.int64)
    attempts_total = 0
    perf = time.perf_counter_ns
    for i in range(rounds):
        t0 = perf()
        arm, p, attempts = engine.select_arm()
        engine.update(arm, losses[i])
        samples[i] = perf() - t0
        attempts_total += attempts
    env_calls_timed = env.observe_count - calls_before
    if env_calls_timed != 0:
        raise RuntimeError("environment was consulted inside the timed region")
    timed = np.sort(samples[warmup:])
    return {
        "k": K,
        "backend": backend,
        "rounds": rounds,
        "warmup": warmup,
        "median_ns": int(timed[len(timed) // 2]),
        "p99_ns": int(timed[min(len(timed) - 1, int(0.99 * (len(timed) - 1)))]),
        "mean_attempts": attempts_total / rounds,
        "env_calls_timed": env_calls_timed,
    }


def cmd_bench(k_list=DEFAULT_BENCH_KS, rounds: int = 100_000, backends=BACKENDS,
              warmup: int = 1000, seed: int = 0, out: str = "",
              config_hash: str = "") -> str:
    """Latency sweep over (K, backend) cells; one CSV row per cell."""
    h = config_hash or "bench"
    lines = ["config_hash,k,backend,rounds,warmup,median_ns,p99_ns,mean_attempts,env_calls_timed"]
    for K in k_list:
        for backend in backends:
            row = bench_one(int(K), backend, rounds, warmup=warmup, seed=seed)
            lines.append(",".join([
                h, str(row["k"]), row["backend"], str(row["rounds"]), str(row["warmup"]),
                str(row["median_ns"]), str(row["p99_ns"]),
                _fmt(row["mean_attempts"]), str(row["env_calls_timed"]),
            ]))
    text = "\n".join(lines) + "\n"
    _write_out(text, out)
    return text


def _time_player_median(make_player_fn, rounds: int, warmup: int, seed: int) -> int:
    """Median step() latency for an arbitrary player, losses precomputed."""
    gen = np.random.default_rng([seed, 7])
    env = _BenchEnv(gen.random(rounds).tolist())
    player = make_player_fn()
    samples = np.empty(rounds, dtype=np.int64)
    perf = time.perf_counter_ns
    for i in range(rounds):
        t0 = perf()
        player.step(env)
        samples[i] = perf() - t0
    timed = np.sort(samples[warmup:])
    return int(timed[len(timed) // 2])


def cmd_table1(cfg: ExperimentConfig, bench_k: int = 4096, bench_rounds: int = 30_000,
               bench_warmup: int = 1000) -> str:
    """Measured summary: per-round latency at one large K and regret
    coefficients at the configured desk scale, one row per algorithm/backend.
    """
    cfg.validate()
    rows = []
    variants = [("exp3-fixed", b) for b in BACKENDS] + [
        ("doubling", cfg.backend),
        ("ftrl", "-"),
        ("delayed", cfg.backend),
    ]
    for algorithm, backend in variants:
        sub = ExperimentConfig(**{**asdict(cfg), "algorithm": algorithm,
                                  "backend": backend if backend != "-" else cfg.backend,
                                  "out": ""})
        runs = map_seeds(sub)
        finals = np.array([r.rows[-1][1] for r in runs])
        mean = float(finals.mean())
        stderr = float(finals.std(ddof=1) / math.sqrt(len(finals))) if len(finals) > 1 else 0.0
        coeff = mean / regret_bound_denominator(cfg.k, cfg.t)

        def factory(algorithm=algorithm, backend=backend):
            horizon = max(bench_rounds, int(math.ceil(short_horizon_threshold(bench_k))))
            bench_cfg = ExperimentConfig(**{**asdict(cfg), "algorithm": algorithm,
                                            "backend": backend if backend != "-" else cfg.backend,
                                            "k": bench_k, "t": horizon, "out": ""})
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return make_player(bench_cfg, seed=0)

        median_ns = _time_player_median(factory, bench_rounds, bench_warmup, seed=0)
        rows.append((algorithm, backend, median_ns, mean, stderr, coeff))

    header = (f"{'algorithm':<12} {'backend':<24} {'med_ns/round @K=' + str(bench_k):>22} "
              f"{'regret @K=' + str(cfg.k) + ',T=' + str(cfg.t):>24} {'stderr':>10} {'coeff':>8}")
    sep = "-" * len(header)
    body = [header, sep]
    for algorithm, backend, median_ns, mean, stderr, coeff in rows:
        body.append(f"{algorithm:<12} {backend:<24} {median_ns:>22d} {mean:>24.2f} "
                    f"{stderr:>10.2f} {coeff:>8.4f}")
    body.append(sep)
    body.append(f"coeff = regret / sqrt(K T ln K); config_hash={cfg.config_hash()}")
    text = "\n".join(body) + "\n"
    _write_out(text, cfg.out)
    return text


def cmd_export_env(cfg: ExperimentConfig) -> str:
    """Materialize the configured environment's loss table as replayable CSV."""
    cfg.validate()
    if not cfg.out:
        raise ConfigError("export-env needs an output path (out=... or --out)")
    env = make_env(cfg, cfg.seeds[0])
    try:
        export_loss_table(env, cfg.t, cfg.out)
    except RuntimeError:
        raise ConfigError(
            "adaptive environments cannot be exported without being played"
        ) from None
    return cfg.out
