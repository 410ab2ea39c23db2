"""Loss-generating adversaries and pseudo-regret accounting.

Every environment exposes observe(t, arm) -> loss for the player and
full_loss_vector(t) for the harness's regret ledger only. Loss vectors are
fixed before the round's arm is revealed: full_loss_vector(t) returns the
same vector whether called before or after observe(t, arm).
"""

from __future__ import annotations

import numpy as np

_CHUNK = 4096


class LossTableError(ValueError):
    """A replay file failed validation; the message carries the row number."""


class BernoulliEnv:
    """Oblivious stochastic adversary: independent Bernoulli(mean_i) losses.

    Rows are materialized lazily in chunks, each chunk from its own child
    stream of the seed, so the loss table is a pure function of (seed, t)
    and query order can never change it.
    """

    def __init__(self, K: int, means, seed=0):
        if K < 2:
            raise ValueError("K must be >= 2")
        m = np.broadcast_to(np.asarray(means, dtype=np.float64), (K,)).copy()
        if not np.all(np.isfinite(m)) or np.any(m < 0.0) or np.any(m > 1.0):
            raise ValueError("means must lie in [0, 1]")
        self.K = K
        self.means = m
        self.seed = seed
        self.observe_count = 0
        self._chunks: dict[int, np.ndarray] = {}

    def _row(self, t: int) -> np.ndarray:
        if t < 1:
            raise ValueError("rounds are 1-based")
        c, r = divmod(t - 1, _CHUNK)
        chunk = self._chunks.get(c)
        if chunk is None:
            gen = np.random.default_rng([self.seed, c] if isinstance(self.seed, int) else list(self.seed) + [c])
            chunk = (gen.random((_CHUNK, self.K)) < self.means).astype(np.float64)
            self._chunks[c] = chunk
        return chunk[r]

    def observe(self, t: int, arm: int) -> float:
        self.observe_count += 1
        return float(self._row(t)[arm])

    def full_loss_vector(self, t: int) -> np.ndarray:
        return self._row(t).copy()


class TargetMostPulledEnv:
    """Adaptive adversary: loss 1 on the arm pulled most so far, 0 elsewhere.

    Round t's vector depends only on the pulls of rounds before t (ties go
    to the lowest index; round 1 has no history and is all zeros), so it is
    fixed before the round's arm is realized.
    """

    def __init__(self, K: int):
        if K < 2:
            raise ValueError("K must be >= 2")
        self.K = K
        self.pulls = np.zeros(K, dtype=np.int64)
        self.observe_count = 0
        self._frontier = 1
        self._rows: dict[int, np.ndarray] = {}

    def _row(self, t: int) -> np.ndarray:
        row = self._rows.get(t)
        if row is not None:
            return row
        if t != self._frontier:
            raise RuntimeError(
                f"round {t} is not formed yet (next playable round is {self._frontier})"
            )
        row = np.zeros(self.K)
        if self.pulls.any():
            row[int(np.argmax(self.pulls))] = 1.0
        self._rows[t] = row
        return row

    def observe(self, t: int, arm: int) -> float:
        if t != self._frontier:
            raise RuntimeError(f"round {t} already played or out of order")
        row = self._row(t)
        self.observe_count += 1
        self.pulls[arm] += 1
        self._frontier = t + 1
        return float(row[arm])

    def full_loss_vector(self, t: int) -> np.ndarray:
        return self._row(t).copy()


class ReplayEnv:
    """Environment backed by a loss table loaded from a header-free CSV.

    Each of the T rows holds K comma-separated losses in [0, 1]; validation
    failures raise LossTableError naming the offending 1-based row.
    """

    def __init__(self, path):
        rows = []
        width = None
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                cells = line.split(",")
                if width is None:
                    width = len(cells)
                    if width < 2:
                        raise LossTableError(f"{path} row {lineno}: need at least 2 columns")
                elif len(cells) != width:
                    raise LossTableError(
                        f"{path} row {lineno}: expected {width} columns, got {len(cells)}"
                    )
                try:
                    vals = [float(c) for c in cells]
                except ValueError:
                    raise LossTableError(f"{path} row {lineno}: non-numeric value") from None
                for v in vals:
                    if not (0.0 <= v <= 1.0):
                        raise LossTableError(f"{path} row {lineno}: loss {v!r} outside [0, 1]")
                rows.append(vals)
        if not rows:
            raise LossTableError(f"{path}: empty loss table")
        self.table = np.asarray(rows)
        self.T = self.table.shape[0]
        self.K = self.table.shape[1]
        self.observe_count = 0

    def observe(self, t: int, arm: int) -> float:
        self.observe_count += 1
        if not 1 <= t <= self.T:
            raise ValueError(f"round {t} outside the replayed range 1..{self.T}")
        return float(self.table[t - 1, arm])

    def full_loss_vector(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise ValueError(f"round {t} outside the replayed range 1..{self.T}")
        return self.table[t - 1].copy()


def stochastic_env(K: int, means, seed=0) -> BernoulliEnv:
    return BernoulliEnv(K, means, seed)


def adaptive_env(K: int, strategy: str = "target_most_pulled") -> TargetMostPulledEnv:
    if strategy != "target_most_pulled":
        raise ValueError(f"unknown adaptive strategy {strategy!r}")
    return TargetMostPulledEnv(K)


def replay_env(path) -> ReplayEnv:
    return ReplayEnv(path)


def export_loss_table(env, T: int, path) -> None:
    """Write rounds 1..T of an environment's loss table as replayable CSV."""
    with open(path, "w") as fh:
        for t in range(1, T + 1):
            row = env.full_loss_vector(t)
            fh.write(",".join(format(v, ".17g") for v in row))
            fh.write("\n")


class RegretLedger:
    """Running pseudo-regret against the best fixed arm in hindsight.

    The ledger sees full loss vectors (harness privilege); the player never
    does. pseudo_regret is available after any prefix of rounds.
    """

    def __init__(self, K: int):
        self.cum_player_loss = 0.0
        self.cum_arm_loss = np.zeros(K)

    def record(self, arm: int, loss_vector: np.ndarray) -> None:
        self.cum_player_loss += float(loss_vector[arm])
        self.cum_arm_loss += loss_vector

    @property
    def pseudo_regret(self) -> float:
        return self.cum_player_loss - float(self.cum_arm_loss.min())
