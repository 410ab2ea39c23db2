"""fastexp3: adversarial bandits (EXP3/EXP4) with interchangeable sampling
backends and an experiment harness.

The fixed-horizon engine is exact under every backend; backends trade how
per-round cost scales with the number of arms K:

    naive                  O(K)        prefix-sum scan
    segtree                O(log K)    sum tree, one random draw per round
    alias_snapshot         O(1) exp.   stale alias table + rejection
    alias_double_buffered  O(1) exp.   rebuilds spread across rounds

Anytime variants (unknown horizon): DoublingWrapper, FtrlAnytimeEngine
(exact, O(K)/round), DelayedUpdateEngine (fast, per-block learning rate).
"""

from .core import (
    HorizonParams,
    RoundRecord,
    ShortHorizonWarning,
    UniformSource,
    anytime_eta,
    block_end,
    fixed_eta,
    ipw_estimate,
    short_horizon_threshold,
    validate_loss,
)
from .samplers import (
    AliasTable,
    IncrementalBuilder,
    SegTree,
    SnapshotSampler,
    linear_cdf_sample,
)
from .exp3 import BACKENDS, Exp3Engine, WeightState, run_episode
from .anytime import DelayedUpdateEngine, DoublingWrapper, FtrlAnytimeEngine
from .exp4 import Exp4Engine, IdentityOracle, PartitionOracle
from .environments import (
    BernoulliEnv,
    LossTableError,
    RegretLedger,
    ReplayEnv,
    TargetMostPulledEnv,
    adaptive_env,
    export_loss_table,
    replay_env,
    stochastic_env,
)
from .harness import ExperimentConfig, ConfigError

__version__ = "0.1.0"

__all__ = [
    "AliasTable",
    "BACKENDS",
    "BernoulliEnv",
    "ConfigError",
    "DelayedUpdateEngine",
    "DoublingWrapper",
    "Exp3Engine",
    "Exp4Engine",
    "ExperimentConfig",
    "FtrlAnytimeEngine",
    "HorizonParams",
    "IdentityOracle",
    "IncrementalBuilder",
    "LossTableError",
    "PartitionOracle",
    "RegretLedger",
    "ReplayEnv",
    "RoundRecord",
    "SegTree",
    "ShortHorizonWarning",
    "SnapshotSampler",
    "TargetMostPulledEnv",
    "UniformSource",
    "WeightState",
    "adaptive_env",
    "anytime_eta",
    "block_end",
    "export_loss_table",
    "fixed_eta",
    "ipw_estimate",
    "linear_cdf_sample",
    "replay_env",
    "run_episode",
    "short_horizon_threshold",
    "stochastic_env",
    "validate_loss",
]
