"""Weighted-sampling backends: linear scan, segment tree, alias table,
snapshot rejection sampling, and an incremental alias rebuilder for
double buffering.

All samplers draw arms proportional to nonnegative weights. The segment
tree supports O(log K) point updates; the alias table is static but samples
in O(1); the snapshot sampler turns a stale alias table into an exact
sampler for the current weights via rejection, as long as weights only
ever decrease after the snapshot.
"""

from __future__ import annotations

import math

import numpy as np

# A rejection loop this long means the live/snapshot scales have diverged;
# fail loudly instead of spinning.
REJECTION_ATTEMPT_CAP = 1_000_000

# Tolerated overshoot of the acceptance ratio before declaring a scale mismatch.
ACCEPT_RATIO_SLACK = 1e-9


def check_weights(weights) -> np.ndarray:
    """Validate and return a float64 copy of a weight vector."""
    w = np.array(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 2:
        raise ValueError("need a 1-d vector of at least two weights")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    if not (float(w.sum()) > 0.0):
        raise ValueError("total weight must be positive")
    return w


def linear_cdf_sample(weights: np.ndarray, u: float) -> int:
    """Inverse-CDF over prefix sums with half-open intervals [lo, hi).

    Returns the index whose interval contains u * total. One full pass;
    this is the O(K) baseline the tree replaces.
    """
    c = np.cumsum(weights)
    total = c[-1]
    if not total > 0.0:
        raise RuntimeError("all weights are zero")
    return int(np.searchsorted(c, u * total, side="right"))


class SegTree:
    """Flat-array sum tree over K weights, padded to a power of two.

    Nodes live in a 1-based array of length 2M: node i's children are 2i and
    2i+1, leaves occupy M..M+K-1, and each internal node stores the sum of
    its children. Padding leaves hold exactly 0, so they are unreachable
    while the root is positive (a random r < root never exhausts the real
    leaves).
    """

    __slots__ = ("K", "M", "nodes")

    def __init__(self, weights):
        w = check_weights(weights)
        K = w.size
        M = 1
        while M < K:
            M *= 2
        self.K = K
        self.M = M
        self.nodes = self._packed(w)

    def _packed(self, w: np.ndarray) -> list:
        M = self.M
        nodes = np.zeros(2 * M)
        nodes[M:M + self.K] = w
        half = M
        while half > 1:
            half //= 2
            nodes[half:2 * half] = nodes[2 * half:4 * half:2] + nodes[2 * half + 1:4 * half:2]
        # Python list: scalar reads in the descent are ~2x faster than ndarray.
        return nodes.tolist()

    @property
    def total(self) -> float:
        return self.nodes[1]

    def leaf(self, arm: int) -> float:
        return self.nodes[self.M + arm]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.nodes)

    def sample(self, u: float) -> int:
        """Arm whose prefix-sum interval [sum_{j<i} w_j, sum_{j<=i} w_j) contains u * total."""
        nodes = self.nodes
        root = nodes[1]
        if not root > 0.0:
            raise RuntimeError("segment tree has zero total weight")
        r = u * root
        idx = 1
        M = self.M
        while idx < M:
            idx += idx
            left = nodes[idx]
            if r >= left:
                r -= left
                idx += 1
        # Rounding at an interval boundary can land on an empty leaf; the true
        # owner of r is then the nearest occupied leaf to the left.
        while nodes[idx] == 0.0:
            idx -= 1
        return idx - M

    def update(self, arm: int, new_weight: float) -> None:
        """Set one leaf and recompute the sums on its root path."""
        if not 0 <= arm < self.K:
            raise ValueError(f"arm {arm} out of range for K={self.K}")
        if not (math.isfinite(new_weight) and new_weight >= 0.0):
            raise ValueError(f"weight must be finite and nonnegative, got {new_weight!r}")
        nodes = self.nodes
        idx = self.M + arm
        nodes[idx] = new_weight
        while idx > 1:
            idx >>= 1
            i2 = idx + idx
            nodes[idx] = nodes[i2] + nodes[i2 + 1]

    def reload(self, weights) -> None:
        """Rebuild every leaf in O(K); used after bulk weight rewrites."""
        w = check_weights(weights)
        if w.size != self.K:
            raise ValueError("weight count changed")
        self.nodes = self._packed(w)


class AliasTable:
    """Vose alias table: K bins of capacity mean = W/K, each holding a
    primary (arm, mass) plus optionally an alias arm carrying the remainder.

    Sampling picks a bin uniformly, then one of its at-most-two occupants
    proportional to mass: O(1) per draw after O(K) construction. The table
    is static; rebuilding is the only update.
    """

    __slots__ = ("K", "mean", "primary_arm", "primary_mass", "alias_arm", "alias_mass")

    def __init__(self, weights):
        w = check_weights(weights)
        K = w.size
        mean = float(w.sum()) / K
        # Strict threshold: weights equal to the mean go to Large.
        small = np.flatnonzero(w < mean).tolist()
        large = np.flatnonzero(w >= mean).tolist()
        rem = w.tolist()

        pa = [0] * K
        pm = [0.0] * K
        aa = [-1] * K
        am = [0.0] * K
        b = 0
        while small and large:
            s = small.pop()
            l = large.pop()
            pa[b] = s
            pm[b] = rem[s]
            aa[b] = l
            am[b] = mean - rem[s]
            rem[l] -= mean - rem[s]
            if rem[l] < mean:
                small.append(l)
            else:
                large.append(l)
            b += 1
        # Numerically safe completion: whichever stack survives holds elements
        # whose remaining weight equals the bin capacity up to rounding, so
        # each fills a bin alone at full capacity.
        for stack in (small, large):
            while stack:
                x = stack.pop()
                pa[b] = x
                pm[b] = mean
                aa[b] = -1
                am[b] = 0.0
                b += 1
        assert b == K

        self.K = K
        self.mean = mean
        self.primary_arm = pa
        self.primary_mass = pm
        self.alias_arm = aa
        self.alias_mass = am

    def sample(self, u1: float, u2: float) -> int:
        """Bin selection by u1, occupant selection by u2; exactly two uniforms."""
        b = int(u1 * self.K)
        if u2 * self.mean < self.primary_mass[b]:
            return self.primary_arm[b]
        a = self.alias_arm[b]
        # A full bin can lose the strict comparison only through rounding at
        # u2 ~ 1; it still belongs to its sole occupant.
        return a if a >= 0 else self.primary_arm[b]

    def arm_masses(self) -> np.ndarray:
        """Total mass per arm across all bins; reconstructs the input weights."""
        m = np.zeros(self.K)
        for b in range(self.K):
            m[self.primary_arm[b]] += self.primary_mass[b]
            a = self.alias_arm[b]
            if a >= 0:
                m[a] += self.alias_mass[b]
        return m

    def rescale(self, factor: float) -> None:
        """Multiply every mass (and the bin capacity) by a positive factor."""
        if not (factor > 0.0 and math.isfinite(factor)):
            raise ValueError("rescale factor must be positive and finite")
        self.mean *= factor
        self.primary_mass = [m * factor for m in self.primary_mass]
        self.alias_mass = [m * factor for m in self.alias_mass]


class SnapshotSampler:
    """Exact sampler for decreasing live weights via a frozen alias table.

    Proposes arms from the alias table built at snapshot time and accepts
    arm k with probability live[k] / snapshot[k]. Because the live weights
    never exceed the snapshot, the acceptance ratio is a valid probability
    and accepted arms follow live / sum(live) exactly.

    Zero snapshot entries are tolerated (an extreme weight spread can
    underflow a raw mirror): such arms carry zero proposal mass and are
    never drawn.

    Each attempt consumes three uniforms: bin, occupant, accept test.
    """

    __slots__ = ("table", "snapshot", "W_snapshot")

    def __init__(self, weights):
        w = check_weights(weights)
        self.table = AliasTable(w)
        self.snapshot = w.tolist()
        self.W_snapshot = float(w.sum())

    @classmethod
    def from_built(cls, table: AliasTable, snapshot: np.ndarray, total: float) -> "SnapshotSampler":
        """Assemble from a table already constructed (by the incremental builder)."""
        s = object.__new__(cls)
        s.table = table
        s.snapshot = np.asarray(snapshot).tolist()
        s.W_snapshot = float(total)
        return s

    def sample(self, live, rng) -> tuple[int, int]:
        """Draw (arm, attempts) with arm ~ live / sum(live).

        live must be indexable, on the same scale as the snapshot, and
        elementwise <= snapshot.
        """
        table = self.table
        snap = self.snapshot
        uniform = rng.uniform
        for attempts in range(1, REJECTION_ATTEMPT_CAP + 1):
            k = table.sample(uniform(), uniform())
            ratio = live[k] / snap[k]
            if ratio > 1.0 + ACCEPT_RATIO_SLACK:
                raise RuntimeError(
                    f"acceptance ratio {ratio!r} > 1 for arm {k}: live weights "
                    "are not on the snapshot's scale"
                )
            if uniform() < ratio:
                return k, attempts
        raise RuntimeError(
            f"no arm accepted after {REJECTION_ATTEMPT_CAP} attempts; "
            "live weights have collapsed relative to the snapshot"
        )

    def rescale(self, factor: float) -> None:
        """Keep the snapshot on the live scale after a renormalization."""
        self.snapshot = [s * factor for s in self.snapshot]
        self.W_snapshot *= factor
        self.table.rescale(factor)


class IncrementalBuilder:
    """Builds an AliasTable from a frozen weight copy a few placements at a
    time, so a rebuild can be spread across rounds instead of stalling one.

    Initialization copies the weights and classifies them (one vectorized
    pass); each step() then performs at most work_budget bin placements.
    After ceil(K / work_budget) steps the finished table is field-identical
    to a monolithic AliasTable built from the same weights.
    """

    __slots__ = (
        "snapshot", "total", "work_budget", "last_step_work",
        "_mean", "_small", "_large", "_rem",
        "_pa", "_pm", "_aa", "_am", "_cursor", "_done",
    )

    def __init__(self, weights, work_budget: int = 4):
        if not isinstance(work_budget, int) or work_budget < 1:
            raise ValueError("work_budget must be a positive integer")
        w = check_weights(weights)  # owns the copy
        K = w.size
        self.snapshot = w
        self.total = float(w.sum())
        self.work_budget = work_budget
        self.last_step_work = 0
        self._mean = self.total / K
        self._small = np.flatnonzero(w < self._mean).tolist()
        self._large = np.flatnonzero(w >= self._mean).tolist()
        self._rem = w.tolist()
        self._pa = [0] * K
        self._pm = [0.0] * K
        self._aa = [-1] * K
        self._am = [0.0] * K
        self._cursor = 0
        self._done = False

    @property
    def finished(self) -> bool:
        return self._done

    def _place_one(self) -> None:
        b = self._cursor
        mean = self._mean
        small, large, rem = self._small, self._large, self._rem
        if small and large:
            s = small.pop()
            l = large.pop()
            self._pa[b] = s
            self._pm[b] = rem[s]
            self._aa[b] = l
            self._am[b] = mean - rem[s]
            rem[l] -= mean - rem[s]
            if rem[l] < mean:
                small.append(l)
            else:
                large.append(l)
        else:
            x = (small or large).pop()
            self._pa[b] = x
            self._pm[b] = mean
            self._aa[b] = -1
            self._am[b] = 0.0
        self._cursor = b + 1

    def step(self) -> AliasTable | None:
        """Run at most work_budget placements; returns the table once complete."""
        if self._done:
            raise RuntimeError("builder already finished")
        K = self.snapshot.size
        work = 0
        while work < self.work_budget and self._cursor < K:
            self._place_one()
            work += 1
        self.last_step_work = work
        if self._cursor < K:
            return None
        self._done = True
        table = object.__new__(AliasTable)
        table.K = K
        table.mean = self._mean
        table.primary_arm = self._pa
        table.primary_mass = self._pm
        table.alias_arm = self._aa
        table.alias_mass = self._am
        return table

    def rescale(self, factor: float) -> None:
        """Apply a renormalization factor to all internal masses mid-build."""
        if not (factor > 0.0 and math.isfinite(factor)):
            raise ValueError("rescale factor must be positive and finite")
        self.snapshot *= factor
        self.total *= factor
        self._mean *= factor
        self._rem = [r * factor for r in self._rem]
        self._pm = [m * factor for m in self._pm]
        self._am = [m * factor for m in self._am]
