"""EXP4: exponential weights over experts who recommend arms.

The engine samples an expert proportionally to expert weights, plays that
expert's recommended arm, and downweights every expert that recommended the
same arm by a shared factor. The oracle supplies, per round and expert, the
recommended arm and the full group of like-minded experts, so the update
touches exactly that group. All EXP3 sampling backends apply unchanged with
arms replaced by experts.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .core import RoundRecord, UniformSource, ipw_estimate, validate_loss
from .exp3 import WeightState, make_backend, _ALIAS_BACKENDS


class IdentityOracle:
    """Expert j always recommends arm j; groups are singletons.

    Under this oracle EXP4 with N experts is exactly EXP3 with N arms.
    """

    def __init__(self, N: int):
        if N < 2:
            raise ValueError("need at least two experts")
        self.N = N

    def advise(self, t: int, j: int) -> tuple[int, list[int]]:
        if not 0 <= j < self.N:
            raise ValueError(f"expert {j} out of range for N={self.N}")
        return j, [j]


class PartitionOracle:
    """Experts assigned to arms by a table; one row of advice per round.

    assignments is an (R, N) int array: row r gives every expert's
    recommended arm in round r+1. Rounds past the last row reuse it, so a
    single row is a static partition.
    """

    def __init__(self, assignments):
        table = np.asarray(assignments, dtype=np.int64)
        if table.ndim == 1:
            table = table[None, :]
        if table.ndim != 2 or table.shape[1] < 2:
            raise ValueError("assignments must be (rounds, experts) with >= 2 experts")
        if np.any(table < 0):
            raise ValueError("arm indices must be nonnegative")
        self.N = int(table.shape[1])
        self.table = table
        self._groups = []
        for row in table:
            by_arm: dict[int, list[int]] = {}
            for j, arm in enumerate(row):
                by_arm.setdefault(int(arm), []).append(j)
            self._groups.append(by_arm)

    @classmethod
    def from_file(cls, path) -> "PartitionOracle":
        """Load advice from a text file.

        Format: blocks of N lines "expert_id arm_id", one block per round,
        blocks separated by blank lines (or back to expert 0). '#' starts a
        comment. A single block acts as a static partition.
        """
        rows: list[dict[int, int]] = []
        current: dict[int, int] = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'expert_id arm_id', got {raw.strip()!r}")
                try:
                    j, arm = int(parts[0]), int(parts[1])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-integer field in {raw.strip()!r}") from None
                if j in current:
                    rows.append(current)
                    current = {}
                current[j] = arm
        if current:
            rows.append(current)
        if not rows:
            raise ValueError(f"{path}: no advice found")
        n = len(rows[0])
        table = np.empty((len(rows), n), dtype=np.int64)
        for r, row in enumerate(rows):
            if sorted(row) != list(range(n)):
                raise ValueError(f"{path}: round block {r + 1} must cover experts 0..{n - 1} exactly")
            for j, arm in row.items():
                table[r, j] = arm
        return cls(table)

    def advise(self, t: int, j: int) -> tuple[int, list[int]]:
        if not 0 <= j < self.N:
            raise ValueError(f"expert {j} out of range for N={self.N}")
        r = min(t - 1, len(self.table) - 1)
        arm = int(self.table[r, j])
        return arm, self._groups[r][arm]


class Exp4Engine:
    """Expert-advice engine sharing the EXP3 weight and backend machinery.

    eta defaults to sqrt(2 ln N / (N T)), the fixed-horizon schedule with
    arms replaced by experts; pass eta explicitly to override (this default
    is a convention, not a tuned constant).
    """

    def __init__(self, N: int, T: int, backend: str = "segtree", seed=0,
                 eta: float | None = None, rebuild_period: int | None = None,
                 work_budget: int = 4):
        if not isinstance(N, int) or N < 2:
            raise ValueError(f"N must be an integer >= 2, got {N!r}")
        if not isinstance(T, int) or T < 1:
            raise ValueError(f"T must be an integer >= 1, got {T!r}")
        if eta is None:
            eta = math.sqrt(2.0 * math.log(N) / (N * T))
        self.N = N
        self.T = T
        self.t = 1
        self.state = WeightState(N, eta)
        self.rng = UniformSource(seed)
        self.rebuild_period = rebuild_period if rebuild_period else N
        self.backend = make_backend(backend, self.state, work_budget)
        self._is_alias = backend in _ALIAS_BACKENDS
        self.rebuild_count = 0
        self.last_attempts = 0
        self.touched_last = 0
        self._last_members: list[int] | None = None

    @property
    def eta(self) -> float:
        return self.state.eta

    def probabilities(self) -> np.ndarray:
        return self.state.probabilities()

    def select(self, oracle) -> tuple[int, int, float]:
        """Sample an expert; returns (expert, recommended arm, group probability).

        group probability is the total live probability of all experts
        recommending the same arm, computed in O(group size).
        """
        expert, attempts = self.backend.sample(self.rng)
        arm, members = oracle.advise(self.t, expert)
        if expert not in members:
            raise ValueError(
                f"oracle inconsistency at t={self.t}: expert {expert} missing from its own group"
            )
        group_prob = float(self.state.raw[members].sum()) / self.state.W_raw
        self.last_attempts = attempts
        self._last_members = members
        return expert, arm, group_prob

    def update(self, expert: int, members, loss, group_prob: float) -> None:
        """Downweight every expert in the recommending group by one shared factor."""
        loss = validate_loss(loss)
        if expert not in members:
            raise ValueError(f"expert {expert} missing from its own group")
        est = ipw_estimate(loss, group_prob)
        state = self.state
        for j in members:
            new_raw = state.apply_estimate(j, est)
            self.backend.on_update(j, new_raw)
        self.touched_last = len(members)
        self.backend.background()
        self.t += 1
        rounds_done = self.t - 1
        if self._is_alias and rounds_done % self.rebuild_period == 0:
            self.state.renormalize()
            self.backend.checkpoint()
            self.rebuild_count += 1
        elif state.needs_renorm():
            factor = state.renormalize()
            self.backend.on_renormalize(factor)

    def step(self, env, oracle) -> RoundRecord:
        """One round: sample expert, play its arm, update the whole group."""
        t = self.t
        t0 = time.perf_counter_ns()
        expert, arm, group_prob = self.select(oracle)
        loss = float(env.observe(t, arm))
        self.update(expert, self._last_members, loss, group_prob)
        elapsed = time.perf_counter_ns() - t0
        return RoundRecord(t, arm, loss, group_prob, self.last_attempts, elapsed)
