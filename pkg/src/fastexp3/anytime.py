"""Horizon-free strategies: doubling trick, exact time-varying-rate engine,
and delayed parameter updates.

The exact engine recomputes all K weights from cumulative loss estimates
every round (the slow correctness baseline). The delayed engine freezes the
learning rate within K-round blocks at its end-of-block value, which keeps
the fast one-arm multiplicative update valid inside a block and defers the
full O(K) re-exponentiation to block boundaries, where the alias rebuild
happens anyway.
"""

from __future__ import annotations

import time

import numpy as np

from .core import RoundRecord, UniformSource, anytime_eta, block_end, ipw_estimate, validate_loss
from .exp3 import Exp3Engine, WeightState, make_backend
from .samplers import linear_cdf_sample


class DoublingWrapper:
    """Restarts a fixed-horizon engine on blocks of doubling length 1, 2, 4, ...

    Each block runs an independent engine tuned for its own length; weights
    reset to uniform at every block start, so history across blocks is
    deliberately discarded.
    """

    def __init__(self, K: int, backend: str = "segtree", seed=0, **engine_kwargs):
        self.K = K
        self.backend = backend
        self.seed = seed
        self.t = 1
        self.block_index = 0
        self._remaining = 1
        self._engine_kwargs = engine_kwargs
        self._past_rebuilds = 0
        self.inner = self._fresh_engine()

    def _fresh_engine(self) -> Exp3Engine:
        block_len = 2 ** self.block_index
        return Exp3Engine(
            self.K,
            block_len,
            backend=self.backend,
            seed=[self.seed, self.block_index],
            warn_short_horizon=False,  # short early blocks are inherent to the schedule
            **self._engine_kwargs,
        )

    @property
    def eta(self) -> float:
        return self.inner.eta

    @property
    def rebuild_count(self) -> int:
        return self._past_rebuilds + self.inner.rebuild_count

    def step(self, env) -> RoundRecord:
        if self._remaining == 0:
            self.block_index += 1
            self._remaining = 2 ** self.block_index
            self._past_rebuilds += self.inner.rebuild_count
            self.inner = self._fresh_engine()
        t = self.t
        t0 = time.perf_counter_ns()
        arm, p, attempts = self.inner.select_arm()
        loss = float(env.observe(t, arm))
        self.inner.update(arm, loss)
        elapsed = time.perf_counter_ns() - t0
        self.t += 1
        self._remaining -= 1
        return RoundRecord(t, arm, loss, p, attempts, elapsed)


class FtrlAnytimeEngine:
    """Exact anytime engine: O(K) per round.

    Round t samples from weights exp(-eta_{t-1} * L[i]) where L holds the
    cumulative IPW loss estimates through round t-1. Every round touches all
    K weights, which is what the delayed variant avoids.
    """

    def __init__(self, K: int, seed=0):
        if not isinstance(K, int) or K < 2:
            raise ValueError(f"K must be an integer >= 2, got {K!r}")
        self.K = K
        self.cum_est_loss = np.zeros(K)
        self.t = 1
        self.rng = UniformSource(seed)

    def current_distribution(self) -> np.ndarray:
        """Exact selection probabilities for the upcoming round."""
        eta = anytime_eta(self.K, max(self.t - 1, 1))
        shifted = self.cum_est_loss - self.cum_est_loss.min()
        w = np.exp(-eta * shifted)
        return w / w.sum()

    def step(self, env) -> RoundRecord:
        t = self.t
        t0 = time.perf_counter_ns()
        p = self.current_distribution()
        arm = linear_cdf_sample(p, self.rng.uniform())
        p_arm = float(p[arm])
        loss = validate_loss(env.observe(t, arm))
        self.cum_est_loss[arm] += ipw_estimate(loss, p_arm)
        elapsed = time.perf_counter_ns() - t0
        self.t += 1
        return RoundRecord(t, arm, loss, p_arm, 1, elapsed)


class DelayedUpdateEngine:
    """Anytime engine with a per-block learning rate, fast within blocks.

    Rounds are grouped into blocks of K. Within block b the learning rate is
    frozen at anytime_eta(K, b*K) -- its value at the block's last round --
    so weights stay exp(-eta_block * L[i]) under one-arm multiplicative
    updates. At each boundary all weights are re-derived from the cumulative
    estimates under the next block's rate and the sampling structure is
    rebuilt, an O(K) step that coincides with the alias rebuild.

    The cumulative estimates are the master state; weights are always an
    exact function of them, which avoids the mis-weighting that a naively
    time-varying rate applies to old observations.
    """

    def __init__(self, K: int, backend: str = "segtree", seed=0, work_budget: int = 4):
        if not isinstance(K, int) or K < 2:
            raise ValueError(f"K must be an integer >= 2, got {K!r}")
        self.K = K
        self.cum_est_loss = np.zeros(K)
        self.t = 1
        eta0 = anytime_eta(K, block_end(1, K))
        self.state = WeightState(K, eta0)
        self.backend = make_backend(backend, self.state, work_budget)
        self.rng = UniformSource(seed)
        self.rebuild_count = 0

    @property
    def eta(self) -> float:
        return self.state.eta

    def probabilities(self) -> np.ndarray:
        return self.state.probabilities()

    def step(self, env) -> RoundRecord:
        t = self.t
        t0 = time.perf_counter_ns()
        arm, attempts = self.backend.sample(self.rng)
        p = self.state.probability(arm)
        loss = validate_loss(env.observe(t, arm))
        est = ipw_estimate(loss, p)
        self.cum_est_loss[arm] += est
        new_raw = self.state.apply_estimate(arm, est)
        self.backend.on_update(arm, new_raw)
        self.backend.background()
        self.t += 1
        if t % self.K == 0:
            self._block_boundary()
        elif self.state.needs_renorm():
            factor = self.state.renormalize()
            self.backend.on_renormalize(factor)
        elapsed = time.perf_counter_ns() - t0
        return RoundRecord(t, arm, loss, p, attempts, elapsed)

    def _block_boundary(self) -> None:
        """Re-exponentiate all weights under the next block's learning rate."""
        eta = anytime_eta(self.K, block_end(self.t, self.K))
        self.state.eta = eta
        np.multiply(self.cum_est_loss, -eta, out=self.state.log_weights)
        self.state.renormalize()
        self.backend.rebuild_full()
        self.rebuild_count += 1
