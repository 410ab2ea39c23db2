import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fastexp3.samplers as samplers
from fastexp3.core import UniformSource
from fastexp3.samplers import (
    AliasTable,
    IncrementalBuilder,
    SegTree,
    SnapshotSampler,
    linear_cdf_sample,
)


def linear_scan_arm(weights, r):
    """Independent inverse-CDF oracle: first arm whose running prefix sum exceeds r."""
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if r < acc:
            return i
    return len(weights) - 1


def prefix_sums(weights):
    acc, out = 0.0, []
    for w in weights:
        acc += w
        out.append(acc)
    return out


weights_strategy = st.lists(
    st.floats(min_value=0.0, max_value=1000.0, allow_nan=False),
    min_size=2, max_size=50,
).filter(lambda w: sum(w) > 1e-9)


class TestSegTreeBuild:
    def test_two_equal_leaves(self):
        tree = SegTree([1.0, 1.0])
        assert tree.nodes == [0.0, 2.0, 1.0, 1.0]

    def test_four_leaves_internal_sums(self):
        tree = SegTree([1.0, 2.0, 3.0, 2.0])
        nodes = tree.nodes
        assert nodes[1] == 8.0
        assert nodes[2] == 3.0  # left subtree 1+2
        assert nodes[3] == 5.0  # right subtree 3+2
        assert nodes[4:8] == [1.0, 2.0, 3.0, 2.0]

    def test_padding_leaf_is_zero(self):
        tree = SegTree([1.0, 2.0, 3.0])
        assert tree.M == 4
        assert tree.nodes[1] == 6.0
        assert tree.leaf(2) == 3.0
        assert tree.nodes[7] == 0.0  # phantom

    @pytest.mark.parametrize("bad", [[1.0], [1.0, -2.0], [1.0, float("nan")], [0.0, 0.0]])
    def test_rejects_invalid_weights(self, bad):
        with pytest.raises(ValueError):
            SegTree(bad)


class TestSegTreeSample:
    def test_first_half(self):
        assert SegTree([1.0, 1.0]).sample(0.25) == 0  # r = 0.5

    def test_interval_membership(self):
        tree = SegTree([1.0, 2.0, 3.0, 2.0])
        # prefix sums (1, 3, 6, 8); r = 3.5 lies in [3, 6)
        assert tree.sample(0.4375) == 2

    def test_boundary_lands_right(self):
        tree = SegTree([1.0, 2.0, 3.0, 2.0])
        # r = 6.0 exactly: half-open intervals put it in [6, 8)
        assert tree.sample(0.75) == 3

    def test_zero_total_is_invalid_state(self):
        tree = SegTree([1.0, 1.0])
        tree.update(0, 0.0)
        tree.update(1, 0.0)
        with pytest.raises(RuntimeError):
            tree.sample(0.5)

    def test_phantom_and_zero_leaves_never_sampled(self):
        tree = SegTree([0.5, 0.0, 0.25, 0.0, 0.125])  # M=8, three phantoms
        hits = set()
        for u in np.linspace(0.0, 1.0, 40_001, endpoint=False):
            hits.add(tree.sample(float(u)))
        assert hits == {0, 2, 4}

    @given(weights_strategy, st.floats(min_value=0.0, max_value=1.0, exclude_max=True))
    @settings(max_examples=300, deadline=None)
    def test_matches_linear_scan_oracle(self, weights, u):
        tree = SegTree(weights) if sum(weights) > 0 else None
        r = u * tree.total
        sums = prefix_sums(weights)
        guard = 1e-12 * sums[-1]
        if any(abs(r - s) <= guard for s in sums):
            return  # boundary ties are allowed to go either way
        assert tree.sample(u) == linear_scan_arm(weights, r)


class TestSegTreeUpdate:
    def test_root_tracks_leaf(self):
        tree = SegTree([1.0, 1.0])
        tree.update(0, 3.0)
        assert tree.nodes == [0.0, 4.0, 3.0, 1.0]

    def test_partial_path_recomputed(self):
        tree = SegTree([1.0, 2.0, 3.0, 2.0])
        tree.update(2, 0.5)
        assert tree.nodes[1] == 5.5
        assert tree.nodes[3] == 2.5
        assert tree.nodes[2] == 3.0  # untouched subtree

    def test_update_then_revert_is_bitwise_identity(self):
        tree = SegTree([1.0, 2.0, 3.0, 2.0])
        before = list(tree.nodes)
        tree.update(1, 7.25)
        tree.update(1, 2.0)
        assert tree.nodes == before

    def test_rejects_bad_updates(self):
        tree = SegTree([1.0, 1.0])
        with pytest.raises(ValueError):
            tree.update(0, -1.0)
        with pytest.raises(ValueError):
            tree.update(0, float("inf"))
        with pytest.raises(ValueError):
            tree.update(5, 1.0)

    @given(weights_strategy, st.lists(st.tuples(st.integers(0, 49), st.floats(0, 100, allow_nan=False)), max_size=40))
    @settings(max_examples=200, deadline=None)
    def test_sum_invariant_after_update_sequences(self, weights, updates):
        tree = SegTree(weights)
        for arm, value in updates:
            tree.update(arm % tree.K, value)
        nodes = tree.as_array()
        for i in range(1, tree.M):
            assert nodes[i] == pytest.approx(nodes[2 * i] + nodes[2 * i + 1], rel=1e-12, abs=1e-300)
        assert np.all(nodes[tree.M + tree.K:] == 0.0)


class TestLinearCdfSample:
    def test_half_open_convention_matches_tree(self):
        w = np.array([1.0, 2.0, 3.0, 2.0])
        tree = SegTree(w)
        for u in np.linspace(0, 1, 7001, endpoint=False):
            assert linear_cdf_sample(w, float(u)) == tree.sample(float(u))

    def test_zero_total_raises(self):
        with pytest.raises(RuntimeError):
            linear_cdf_sample(np.zeros(3), 0.5)


class TestAliasBuild:
    def test_uniform_weights_fill_bins_alone(self):
        table = AliasTable([1.0, 1.0])
        assert sorted(table.primary_arm) == [0, 1]
        assert table.primary_mass == [1.0, 1.0]
        assert table.alias_arm == [-1, -1]

    def test_small_arm_packs_with_large_alias(self):
        table = AliasTable([1.0, 1.0, 2.0])
        assert table.mean == pytest.approx(4.0 / 3.0, rel=1e-15)
        np.testing.assert_allclose(table.arm_masses(), [1.0, 1.0, 2.0], rtol=1e-12)
        # arm 1 is small: its bin holds (1, mass 1) and the big arm as alias
        b = table.primary_arm.index(1)
        assert table.primary_mass[b] == 1.0
        assert table.alias_arm[b] == 2
        assert table.alias_mass[b] == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_probability_by_dyadic_enumeration(self):
        table = AliasTable([1.0, 1.0, 2.0])
        # P(arm) on an exhaustive dyadic grid equals w/W = (1/4, 1/4, 1/2)
        n1, n2 = 3 * 256, 1024
        counts = np.zeros(3)
        for i in range(n1):
            for j in range(n2):
                counts[table.sample(i / n1, j / n2)] += 1
        np.testing.assert_allclose(counts / (n1 * n2), [0.25, 0.25, 0.5], atol=2e-3)

    def test_zero_weight_arm_gets_zero_mass(self):
        table = AliasTable([0.0, 1.0, 1.0])
        masses = table.arm_masses()
        assert masses[0] == 0.0
        np.testing.assert_allclose(masses, [0.0, 1.0, 1.0], rtol=1e-12)

    def test_rejects_invalid_weights(self):
        with pytest.raises(ValueError):
            AliasTable([1.0])
        with pytest.raises(ValueError):
            AliasTable([0.0, 0.0])
        with pytest.raises(ValueError):
            AliasTable([1.0, -1.0])

    @given(weights_strategy)
    @settings(max_examples=300, deadline=None)
    def test_mass_reconstruction(self, weights):
        w = np.asarray(weights)
        table = AliasTable(w)
        np.testing.assert_allclose(table.arm_masses(), w, atol=1e-9 * float(w.sum()))

    def test_bin_capacity_invariant(self):
        rng = np.random.default_rng(3)
        for K in (2, 3, 7, 64):
            w = rng.random(K) + 1e-3
            table = AliasTable(w)
            for b in range(K):
                cap = table.primary_mass[b] + table.alias_mass[b]
                assert cap == pytest.approx(table.mean, rel=1e-12)


class TestAliasSample:
    def test_single_occupant_bin(self):
        table = AliasTable([1.0, 1.0])
        arm_in_bin0 = table.primary_arm[0]
        for u2 in (0.0, 0.3, 0.999999):
            assert table.sample(0.1, u2) == arm_in_bin0

    def test_alias_chosen_when_mass_exceeded(self):
        table = AliasTable([1.0, 1.0, 2.0])
        b = table.primary_arm.index(1)
        # u2 * mean = 1.2 > primary mass 1 picks the alias occupant
        u1 = (b + 0.5) / table.K
        assert table.sample(u1, 0.9) == 2

    def test_exact_law_on_dyadic_grid(self):
        # weights [1, 3]: thresholds are dyadic, so the grid law is exact
        table = AliasTable([1.0, 3.0])
        grid = 1024
        counts = np.zeros(2)
        for i in range(grid):
            for j in range(grid):
                counts[table.sample(i / grid, j / grid)] += 1
        assert counts[0] / grid**2 == 0.25
        assert counts[1] / grid**2 == 0.75


def attempt_outcome_probs(sampler, live):
    """Exact one-attempt outcome distribution of the rejection sampler,
    enumerated from its own table structure: bin choice is uniform, occupant
    choice proportional to mass, acceptance = live/snapshot.
    """
    table = sampler.table
    snap = sampler.snapshot
    K = table.K
    q = np.zeros(len(live))
    for b in range(K):
        pa, pm = table.primary_arm[b], table.primary_mass[b]
        aa, am = table.alias_arm[b], table.alias_mass[b]
        q[pa] += (1.0 / K) * (pm / table.mean) * (live[pa] / snap[pa])
        if aa >= 0:
            q[aa] += (1.0 / K) * (am / table.mean) * (live[aa] / snap[aa])
    return q


class TestSnapshotSampler:
    def test_identical_live_accepts_first_attempt(self):
        w = np.array([0.5, 1.5, 1.0])
        s = SnapshotSampler(w)
        rng = UniformSource(0)
        for _ in range(500):
            arm, attempts = s.sample(w, rng)
            assert attempts == 1

    def test_marginal_acceptance_probability(self):
        s = SnapshotSampler(np.array([1.0, 1.0]))
        live = np.array([0.5, 1.0])
        q = attempt_outcome_probs(s, live)
        # sum over (proposal, accept) outcomes = W_live / W_snapshot
        assert q.sum() == 0.75
        assert q[0] == 0.25
        assert q[1] == 0.5

    def test_depth20_enumeration_total_variation(self):
        # dyadic snapshots/lives with live >= snapshot/2 keep the per-attempt
        # rejection probability <= 1/2, so 20 attempts leave tail <= 2^-20
        cases = [
            (np.array([1.0, 1.0]), np.array([0.5, 1.0])),
            (np.array([0.5, 0.25, 1.0]), np.array([0.25, 0.25, 0.5])),
            (np.array([2.0, 1.0, 0.5, 0.25]), np.array([1.0, 1.0, 0.5, 0.125])),
        ]
        for snap, live in cases:
            s = SnapshotSampler(snap)
            q = attempt_outcome_probs(s, live)
            rho = 1.0 - q.sum()
            assert rho <= 0.5
            depth_mass = q * (1 - rho**20) / (1 - rho)
            target = live / live.sum()
            tv = 0.5 * np.abs(depth_mass / depth_mass.sum() - target).sum() + 0.5 * abs(1 - depth_mass.sum())
            assert tv <= 2.0**-15

    def test_empirical_frequency_five_sigma(self):
        snap = np.array([1.0, 1.0])
        live = np.array([0.5, 1.0])
        s = SnapshotSampler(snap)
        rng = UniformSource(123)
        n = 200_000
        hits = sum(s.sample(live, rng)[0] == 0 for _ in range(n))
        p = live[0] / live.sum()
        sigma = math.sqrt(p * (1 - p) * n)
        assert abs(hits - n * p) <= 5 * sigma

    def test_mean_attempts_bounded_in_shrink_regime(self):
        # live weights shrink by at most e^-2 from the snapshot, so expected
        # attempts stay below e^2
        rng_np = np.random.default_rng(7)
        snap = rng_np.random(16) + 0.5
        factors = np.exp(rng_np.uniform(-2.0, 0.0, size=16))
        live = snap * factors
        s = SnapshotSampler(snap)
        rng = UniformSource(77)
        n = 100_000
        total = sum(s.sample(live, rng)[1] for _ in range(n))
        assert total / n <= math.exp(2)

    def test_scale_mismatch_is_invalid_state(self):
        s = SnapshotSampler(np.array([1.0, 1.0]))
        live = np.array([1.0 + 1e-6, 1.0])
        with pytest.raises(RuntimeError, match="scale"):
            for _ in range(64):  # mismatched arm must be proposed eventually
                s.sample(live, UniformSource(1))

    def test_attempt_cap_is_invalid_state(self, monkeypatch):
        monkeypatch.setattr(samplers, "REJECTION_ATTEMPT_CAP", 32)
        s = SnapshotSampler(np.array([1.0, 1.0]))
        live = np.array([1e-12, 1e-12])
        with pytest.raises(RuntimeError, match="attempts"):
            s.sample(live, UniformSource(3))

    def test_rescale_preserves_ratios(self):
        snap = np.array([2.0, 1.0, 0.5])
        s = SnapshotSampler(snap)
        live = snap * 0.7
        s.rescale(0.25)
        q = attempt_outcome_probs(s, live * 0.25)
        assert q.sum() == pytest.approx(0.7, rel=1e-12)

    def test_zero_snapshot_arm_is_never_proposed(self):
        s = SnapshotSampler(np.array([0.0, 1.0, 1.0]))
        live = np.array([0.0, 0.5, 1.0])
        rng = UniformSource(8)
        for _ in range(2000):
            arm, _ = s.sample(live, rng)
            assert arm != 0


class TestIncrementalBuilder:
    def test_budget_covering_k_finishes_in_one_step(self):
        b = IncrementalBuilder(np.array([1.0, 2.0, 3.0, 4.0]), work_budget=4)
        table = b.step()
        assert table is not None
        assert b.finished

    def test_large_build_takes_exactly_ceil_k_over_budget_steps(self):
        rng = np.random.default_rng(5)
        w = rng.random(1024) + 1e-6
        b = IncrementalBuilder(w, work_budget=4)
        steps = 0
        table = None
        while table is None:
            table = b.step()
            steps += 1
            assert b.last_step_work <= 4
        assert steps == 256
        mono = AliasTable(w)
        assert table.primary_arm == mono.primary_arm
        assert table.primary_mass == mono.primary_mass
        assert table.alias_arm == mono.alias_arm
        assert table.alias_mass == mono.alias_mass
        assert table.mean == mono.mean

    def test_field_identical_for_random_snapshots(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            K = int(rng.integers(2, 200))
            w = rng.random(K) * rng.choice([1e-3, 1.0, 1e3])
            w[rng.integers(0, K)] += 1e-6  # keep total positive
            b = IncrementalBuilder(w, work_budget=int(rng.integers(1, 9)))
            table = None
            while table is None:
                table = b.step()
            mono = AliasTable(w)
            assert table.primary_arm == mono.primary_arm
            assert table.primary_mass == mono.primary_mass
            assert table.alias_arm == mono.alias_arm
            assert table.alias_mass == mono.alias_mass

    def test_builder_owns_its_copy(self):
        w = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        b = IncrementalBuilder(w, work_budget=2)
        frozen = w.copy()
        w[:] = 99.0  # live weights move on while the build is in flight
        table = None
        while table is None:
            table = b.step()
        mono = AliasTable(frozen)
        assert table.primary_mass == mono.primary_mass

    def test_stepping_finished_builder_raises(self):
        b = IncrementalBuilder(np.array([1.0, 1.0]), work_budget=8)
        assert b.step() is not None
        with pytest.raises(RuntimeError):
            b.step()

    def test_rejects_bad_budget(self):
        with pytest.raises(ValueError):
            IncrementalBuilder(np.array([1.0, 1.0]), work_budget=0)
