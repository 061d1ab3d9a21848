import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlticket.netcore import InitSnapshot, MaskSet, NetworkSpec, ParamSet, init_network
from rlticket.pruning import (CONDITIONS, global_magnitude_prune, permute_mask_and_weights,
                              permute_surviving_weights, random_global_mask, random_reinit, rewind, round_half_up,
                              schedule_alive_counts, sparsity_stats)


def layer(vals):
    return np.array(vals, dtype=np.float64).reshape(1, -1)


def params_of(*layers):
    return ParamSet([layer(v) for v in layers], [np.zeros(1) for _ in layers])


def snapshot_of(*layers):
    return InitSnapshot.take(params_of(*layers), 0)


def multisets(params, masks):
    return [sorted(w[m].tolist()) for w, m in zip(params.weights, masks.masks)]


@st.composite
def masked_net(draw):
    sizes = draw(st.lists(st.integers(1, 12), min_size=2, max_size=4))
    seed = draw(st.integers(0, 2**31))
    spec = NetworkSpec(tuple(sizes))
    params, snap = init_network(spec, seed=seed)
    rng = np.random.default_rng(seed)
    keep = draw(st.floats(0.0, 1.0))
    masks = MaskSet([rng.random(s) < keep for s in spec.weight_shapes()])
    return spec, params, snap, masks, seed


class TestRounding:
    @pytest.mark.parametrize("x,expected", [(0.5, 1), (1.5, 2), (2.5, 3), (2.4999, 2), (0.0, 0)])
    def test_half_up(self, x, expected):
        assert round_half_up(x) == expected


class TestGlobalMagnitudePrune:
    def test_unique_smallest(self):
        p = params_of([0.5, -0.1, 0.3, -0.9, 0.05])
        out = global_magnitude_prune(p, MaskSet.ones_like(p), 0.2)
        np.testing.assert_array_equal(out.masks[0], [[True, True, True, True, False]])

    def test_global_ranking_across_layers(self):
        p = params_of([1.0, 0.2], [0.1, 0.3])
        out = global_magnitude_prune(p, MaskSet.ones_like(p), 0.5)
        np.testing.assert_array_equal(out.masks[0], [[True, False]])
        np.testing.assert_array_equal(out.masks[1], [[False, True]])

    def test_ties_break_by_layer_then_row_major(self):
        p = params_of([0.1, 0.1], [0.1, 0.1])
        out = global_magnitude_prune(p, MaskSet.ones_like(p), 0.5)
        np.testing.assert_array_equal(out.masks[0], [[False, False]])
        np.testing.assert_array_equal(out.masks[1], [[True, True]])

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_bounds(self, fraction):
        p = params_of([1.0, 2.0])
        with pytest.raises(ValueError):
            global_magnitude_prune(p, MaskSet.ones_like(p), fraction)

    def test_ten_iterations_compound(self):
        spec = NetworkSpec((4, 64, 64, 2))
        params, _ = init_network(spec, seed=0)
        masks = MaskSet.ones_for(spec)
        for _ in range(10):
            masks = global_magnitude_prune(params, masks, 0.2)
        frac, _ = sparsity_stats(masks)
        total = sum(masks.sizes())
        assert abs(frac - 0.8 ** 10) <= 10 / total

    @settings(max_examples=40, deadline=None)
    @given(net=masked_net(), fraction=st.floats(0.05, 0.95))
    def test_monotone_and_count(self, net, fraction):
        _, params, _, masks, _ = net
        out = global_magnitude_prune(params, masks, fraction)
        alive = sum(masks.alive_counts())
        assert sum(out.alive_counts()) == alive - round_half_up(fraction * alive)
        for new, old in zip(out.masks, masks.masks):
            assert not np.any(new & ~old)

    @settings(max_examples=40, deadline=None)
    @given(net=masked_net())
    def test_pruned_weights_are_the_smallest(self, net):
        _, params, _, masks, _ = net
        out = global_magnitude_prune(params, masks, 0.2)
        removed = np.concatenate([np.abs(w[m & ~n]) for w, m, n in zip(params.weights, masks.masks, out.masks)])
        kept = np.concatenate([np.abs(w[n]) for w, n in zip(params.weights, out.masks)])
        if removed.size and kept.size:
            assert removed.max() <= kept.min()


class TestRewind:
    def test_example(self):
        snap = snapshot_of([0.4, -0.2, 0.7])
        m = MaskSet([np.array([[True, False, True]])])
        out = rewind(params_of([9.0, 9.0, 9.0]), snap, m)
        np.testing.assert_array_equal(out.weights[0], [[0.4, 0.0, 0.7]])

    def test_all_ones_is_snapshot(self):
        spec = NetworkSpec((3, 4, 2))
        params, snap = init_network(spec, seed=4)
        trained = params.copy()
        trained.weights[0] += 1.0
        assert rewind(trained, snap, MaskSet.ones_for(spec)).equals(snap.params)

    def test_all_zero_mask(self):
        spec = NetworkSpec((3, 4, 2))
        params, snap = init_network(spec, seed=4)
        zeros = MaskSet([np.zeros(s, dtype=bool) for s in spec.weight_shapes()])
        out = rewind(params, snap, zeros)
        assert all(np.all(w == 0) for w in out.weights)
        for a, b in zip(out.biases, snap.params.biases):
            np.testing.assert_array_equal(a, b)

    def test_shape_mismatch(self):
        snap = snapshot_of([1.0, 2.0])
        with pytest.raises(ValueError):
            rewind(params_of([1.0, 2.0, 3.0]), snap, MaskSet([np.ones((1, 3), bool)]))


class TestPermuteSurviving:
    def test_single_alive_weight_equals_rewind(self):
        snap = snapshot_of([0.3, -0.6, 0.9])
        m = MaskSet([np.array([[False, True, False]])])
        out = permute_surviving_weights(snap, m, 123)
        assert out.equals(rewind(snap.params, snap, m))

    def test_seed_7_recorded_permutation(self):
        snap = InitSnapshot.take(ParamSet([np.array([[1.0, 2.0], [3.0, 4.0]])], [np.zeros(2)]), 0)
        m = MaskSet([np.array([[True, True], [True, False]])])
        out = permute_surviving_weights(snap, m, 7)
        np.testing.assert_array_equal(out.weights[0], [[1.0, 3.0], [2.0, 0.0]])
        np.testing.assert_array_equal(permute_surviving_weights(snap, m, 7).weights[0], out.weights[0])

    @settings(max_examples=40, deadline=None)
    @given(net=masked_net())
    def test_multiset_preserved_and_mask_kept(self, net):
        _, _, snap, masks, seed = net
        out = permute_surviving_weights(snap, masks, seed)
        assert multisets(out, masks) == multisets(snap.params, masks)
        for w, m in zip(out.weights, masks.masks):
            assert np.all(w[~m] == 0)


class TestPermuteMaskAndWeights:
    @settings(max_examples=40, deadline=None)
    @given(net=masked_net())
    def test_ratios_and_values_preserved(self, net):
        _, _, snap, masks, seed = net
        out, new_masks = permute_mask_and_weights(snap, masks, seed)
        assert new_masks.alive_counts() == masks.alive_counts()
        assert multisets(out, new_masks) == multisets(snap.params, masks)

    def test_dense_mask_unchanged(self):
        spec = NetworkSpec((3, 5, 2))
        _, snap = init_network(spec, seed=1)
        ones = MaskSet.ones_for(spec)
        out, new_masks = permute_mask_and_weights(snap, ones, 3)
        assert new_masks.equals(ones)
        for a, b in zip(out.weights, snap.params.weights):
            assert sorted(a.ravel()) == sorted(b.ravel())


class TestRandomReinit:
    def test_zero_sparsity_all_ones(self):
        spec = NetworkSpec((3, 4, 2))
        _, _, masks = random_reinit(spec, 0.0, seed=0)
        assert masks.equals(MaskSet.ones_for(spec))

    def test_ten_weights_half(self):
        spec = NetworkSpec((2, 5))
        _, _, masks = random_reinit(spec, 0.5, seed=0)
        assert sum(masks.alive_counts()) == 5

    def test_layer_counts_are_hypergeometric(self):
        # layers of 20 and 80 weights, 50 alive: layer-1 count ~ Hypergeom(N=100, K=20, n=50)
        rng = np.random.default_rng(2024)
        counts = np.array([random_global_mask([(4, 5), (8, 10)], 50, rng).alive_counts()[0] for _ in range(1000)])
        mean, var = 20 * 50 / 100, 20 * 50 / 100 * (80 / 100) * (50 / 99)
        assert abs(counts.mean() - mean) < 3 * np.sqrt(var / 1000)
        assert abs(counts.var() - var) / var < 0.2

    def test_weights_masked(self):
        spec = NetworkSpec((6, 8, 3))
        params, _, masks = random_reinit(spec, 0.7, seed=5)
        for w, m in zip(params.weights, masks.masks):
            assert np.all(w[~m] == 0)


class TestSparsityStats:
    def test_all_ones(self):
        assert sparsity_stats(MaskSet.ones_for(NetworkSpec((3, 4, 2))))[0] == 1.0

    def test_example(self):
        m = MaskSet([np.array([[True, False]]), np.array([[True, True]])])
        glob, per = sparsity_stats(m)
        assert per == [0.5, 1.0]
        assert glob == 0.75


class TestSchedule:
    @pytest.mark.parametrize("total", [100, 1234, 17152])
    def test_within_rounding_of_geometric(self, total):
        counts = schedule_alive_counts(total, 25)
        for k, c in enumerate(counts):
            assert abs(c / total - 0.8 ** k) <= max(k, 1) / total
            if k:
                assert c == counts[k - 1] - round_half_up(0.2 * counts[k - 1])

    def test_conditions_listed(self):
        assert CONDITIONS == ("mask_weights", "mask_permuted", "permuted_permuted", "random_reinit")
