"""Fixed-horizon EXP3 over pluggable sampling backends.

The engine keeps one weight per arm, samples arms proportionally to the
weights, and applies the multiplicative update exp(-eta * loss / p) to the
selected arm only. Backends change how sampling scales with K, never the
distribution being sampled:

    naive                   O(K) per round (prefix-sum scan)
    segtree                 O(log K) worst-case per round
    alias_snapshot          O(1) expected per round, O(K) rebuild every
                            rebuild_period rounds
    alias_double_buffered   as alias_snapshot, with the rebuild spread
                            across rounds in bounded slices
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np

from .core import (
    RoundRecord,
    ShortHorizonWarning,
    UniformSource,
    fixed_eta,
    ipw_estimate,
    short_horizon_threshold,
    validate_loss,
)
from .samplers import IncrementalBuilder, SegTree, SnapshotSampler, linear_cdf_sample

BACKENDS = ("naive", "segtree", "alias_snapshot", "alias_double_buffered")

# Weight-state hygiene: refresh the raw mirror once the tracked total has
# decayed by e^-2 since the last refresh (keeps the incremental sum accurate
# relative to the current magnitude), or on outright underflow danger.
RENORM_SHRINK = math.exp(-2.0)
RENORM_FLOOR = 1e-100


class WeightState:
    """Log-domain master weights with an incrementally tracked raw mirror.

    log_weights is authoritative and never underflows. raw[i] mirrors
    exp(log_weights[i] - scale) and W_raw tracks sum(raw) incrementally, so
    selection probabilities cost O(1) per round. renormalize() shifts the
    scale so the largest raw weight is 1 and recomputes the mirror exactly.
    """

    __slots__ = ("K", "eta", "log_weights", "scale", "raw", "W_raw", "W_at_renorm")

    def __init__(self, K: int, eta: float):
        if not isinstance(K, int) or K < 2:
            raise ValueError(f"K must be an integer >= 2, got {K!r}")
        if not (eta > 0.0 and math.isfinite(eta)):
            raise ValueError(f"eta must be positive and finite, got {eta!r}")
        self.K = K
        self.eta = eta
        self.log_weights = np.zeros(K)
        self.scale = 0.0
        self.raw = np.ones(K)
        self.W_raw = float(K)
        self.W_at_renorm = float(K)

    def probability(self, arm: int) -> float:
        return float(self.raw[arm]) / self.W_raw

    def probabilities(self) -> np.ndarray:
        return self.raw / self.W_raw

    @property
    def log_total(self) -> float:
        """log of the true total weight, independent of the current scale."""
        return math.log(self.W_raw) + self.scale

    def apply_estimate(self, arm: int, est: float) -> float:
        """Multiply one weight by exp(-eta * est); returns its new raw value."""
        self.log_weights[arm] -= self.eta * est
        new = math.exp(self.log_weights[arm] - self.scale)
        self.W_raw += new - float(self.raw[arm])
        self.raw[arm] = new
        return new

    def needs_renorm(self) -> bool:
        return self.W_raw < RENORM_FLOOR or self.W_raw < self.W_at_renorm * RENORM_SHRINK

    def renormalize(self) -> float:
        """Shift the scale so max raw weight is 1; returns the raw-domain factor."""
        old_scale = self.scale
        self.scale = float(self.log_weights.max())
        np.exp(self.log_weights - self.scale, out=self.raw)
        self.W_raw = float(self.raw.sum())
        self.W_at_renorm = self.W_raw
        return math.exp(old_scale - self.scale)


class _NaiveBackend:
    """Prefix-sum scan; the raw mirror itself is the sampling structure."""

    name = "naive"
    __slots__ = ("state",)

    def __init__(self, state: WeightState, work_budget: int = 0):
        self.state = state

    def sample(self, rng: UniformSource) -> tuple[int, int]:
        return linear_cdf_sample(self.state.raw, rng.uniform()), 1

    def on_update(self, arm: int, new_raw: float) -> None:
        pass

    def on_renormalize(self, factor: float) -> None:
        pass

    def rebuild_full(self) -> None:
        pass

    def background(self) -> int:
        return 0


class _SegTreeBackend:
    """Sum tree mirroring the raw weights; one leaf path per update."""

    name = "segtree"
    __slots__ = ("state", "tree")

    def __init__(self, state: WeightState, work_budget: int = 0):
        self.state = state
        self.tree = SegTree(state.raw)

    def sample(self, rng: UniformSource) -> tuple[int, int]:
        return self.tree.sample(rng.uniform()), 1

    def on_update(self, arm: int, new_raw: float) -> None:
        self.tree.update(arm, new_raw)

    def on_renormalize(self, factor: float) -> None:
        self.tree.reload(self.state.raw)

    def rebuild_full(self) -> None:
        self.tree.reload(self.state.raw)

    def background(self) -> int:
        return 0


class _SnapshotAliasBackend:
    """Rejection sampling against the alias table frozen at the last checkpoint."""

    name = "alias_snapshot"
    __slots__ = ("state", "sampler")

    def __init__(self, state: WeightState, work_budget: int = 0):
        self.state = state
        self.sampler = SnapshotSampler(state.raw)

    def sample(self, rng: UniformSource) -> tuple[int, int]:
        return self.sampler.sample(self.state.raw, rng)

    def on_update(self, arm: int, new_raw: float) -> None:
        pass  # live weights are read through state.raw; snapshot stays frozen

    def on_renormalize(self, factor: float) -> None:
        self.sampler.rescale(factor)

    def checkpoint(self) -> None:
        self.sampler = SnapshotSampler(self.state.raw)

    def rebuild_full(self) -> None:
        self.sampler = SnapshotSampler(self.state.raw)

    def background(self) -> int:
        return 0

    @property
    def snapshot(self) -> list:
        return self.sampler.snapshot


class _DoubleBufferedAliasBackend:
    """Snapshot-rejection sampling with the next table built incrementally.

    A checkpoint starts a fresh builder from the current weights; each round
    then performs at most work_budget placement steps of background work.
    When the builder completes, the finished table replaces the serving one.
    """

    name = "alias_double_buffered"
    __slots__ = ("state", "sampler", "builder", "work_budget")

    def __init__(self, state: WeightState, work_budget: int = 4):
        self.state = state
        self.sampler = SnapshotSampler(state.raw)
        self.builder = None
        self.work_budget = work_budget

    def sample(self, rng: UniformSource) -> tuple[int, int]:
        return self.sampler.sample(self.state.raw, rng)

    def on_update(self, arm: int, new_raw: float) -> None:
        pass

    def on_renormalize(self, factor: float) -> None:
        self.sampler.rescale(factor)
        if self.builder is not None:
            self.builder.rescale(factor)

    def checkpoint(self) -> None:
        # A straggler build (possible when rebuild_period < K / work_budget)
        # is finished in a burst here so the serving table's staleness stays
        # bounded; boundary rounds are the one place allowed to do O(K) work.
        if self.builder is not None and not self.builder.finished:
            table = self.builder.step()
            while table is None:
                table = self.builder.step()
            self._swap(table)
        self.builder = IncrementalBuilder(self.state.raw, self.work_budget)

    def rebuild_full(self) -> None:
        self.sampler = SnapshotSampler(self.state.raw)
        self.builder = None

    def background(self) -> int:
        """One per-round slice of rebuild work; returns placements performed."""
        if self.builder is None:
            return 0
        table = self.builder.step()
        work = self.builder.last_step_work
        if table is not None:
            self._swap(table)
            self.builder = None
        return work

    def _swap(self, table) -> None:
        b = self.builder
        self.sampler = SnapshotSampler.from_built(table, b.snapshot, b.total)

    @property
    def snapshot(self) -> list:
        return self.sampler.snapshot


_BACKEND_CLASSES = {
    "naive": _NaiveBackend,
    "segtree": _SegTreeBackend,
    "alias_snapshot": _SnapshotAliasBackend,
    "alias_double_buffered": _DoubleBufferedAliasBackend,
}

_ALIAS_BACKENDS = ("alias_snapshot", "alias_double_buffered")


def make_backend(name: str, state: WeightState, work_budget: int = 4):
    try:
        cls = _BACKEND_CLASSES[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}") from None
    return cls(state, work_budget)


class Exp3Engine:
    """Fixed-horizon adversarial-bandit engine.

    One round is select_arm() -> observe the loss -> update(). The reported
    probability is always the exact live probability of the returned arm,
    never a snapshot or an estimate, so the IPW estimate stays unbiased.
    """

    def __init__(self, K: int, T: int, backend: str = "segtree", seed=0,
                 rebuild_period: int | None = None, work_budget: int = 4,
                 eta: float | None = None, warn_short_horizon: bool = True):
        if not isinstance(K, int) or K < 2:
            raise ValueError(f"K must be an integer >= 2, got {K!r}")
        if not isinstance(T, int) or T < 1:
            raise ValueError(f"T must be an integer >= 1, got {T!r}")
        if eta is None:
            eta = fixed_eta(K, T)
        if warn_short_horizon and T < short_horizon_threshold(K):
            warnings.warn(
                f"T={T} is below 2 K ln K ~ {short_horizon_threshold(K):.0f}: the regret "
                "bound is vacuous here and rejection-sampling attempt counts may degrade",
                ShortHorizonWarning,
                stacklevel=2,
            )
        self.K = K
        self.T = T
        self.t = 1
        self.state = WeightState(K, eta)
        self.rng = UniformSource(seed)
        self.rebuild_period = rebuild_period if rebuild_period else K
        if self.rebuild_period < 1:
            raise ValueError("rebuild_period must be >= 1")
        self.backend = make_backend(backend, self.state, work_budget)
        self.rebuild_count = 0
        self.renorm_count = 0
        self.last_background_work = 0
        self._is_alias = backend in _ALIAS_BACKENDS

    @property
    def eta(self) -> float:
        return self.state.eta

    @property
    def log_total_weight(self) -> float:
        return self.state.log_total

    def probabilities(self) -> np.ndarray:
        return self.state.probabilities()

    def select_arm(self) -> tuple[int, float, int]:
        """Returns (arm, p, attempts); arm ~ raw/W regardless of backend."""
        if self.t > self.T:
            raise RuntimeError(f"engine is past its horizon T={self.T}")
        arm, attempts = self.backend.sample(self.rng)
        p = self.state.probability(arm)
        return arm, p, attempts

    def update(self, arm: int, loss) -> None:
        """Apply the multiplicative update for the round's selected arm.

        Also accepts forced (arm, loss) pairs that were never sampled; the
        probability used is then the live probability of that arm, exactly
        what select_arm would have reported.
        """
        loss = validate_loss(loss)
        if not 0 <= arm < self.K:
            raise ValueError(f"arm {arm} out of range for K={self.K}")
        state = self.state
        p = state.probability(arm)
        est = ipw_estimate(loss, p)
        new_raw = state.apply_estimate(arm, est)
        self.backend.on_update(arm, new_raw)
        self.last_background_work = self.backend.background()
        self.t += 1
        rounds_done = self.t - 1
        if self._is_alias and rounds_done % self.rebuild_period == 0:
            self.rebuild_checkpoint()
        elif state.needs_renorm():
            self._renormalize()

    def _renormalize(self) -> None:
        factor = self.state.renormalize()
        self.backend.on_renormalize(factor)
        self.renorm_count += 1

    def rebuild_checkpoint(self) -> None:
        """Renormalize and refresh the sampling snapshot from the live weights."""
        if not self._is_alias:
            raise ValueError("checkpoint rebuilds apply only to alias backends")
        self._renormalize()
        self.backend.checkpoint()
        self.rebuild_count += 1

    def step(self, env) -> RoundRecord:
        """One protocol round: select -> observe -> update."""
        t = self.t
        t0 = time.perf_counter_ns()
        arm, p, attempts = self.select_arm()
        loss = float(env.observe(t, arm))
        self.update(arm, loss)
        elapsed = time.perf_counter_ns() - t0
        return RoundRecord(t, arm, loss, p, attempts, elapsed)


def run_episode(engine, env, T: int) -> list[RoundRecord]:
    """Drive any engine with a .step(env) for T rounds."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    return [engine.step(env) for _ in range(T)]
