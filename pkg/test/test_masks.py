import itertools
import math

import numpy as np
import pytest

from app.core.errors import MaskError
from app.domain.masks import (
    Granularity,
    MaskScope,
    PrunableSet,
    PruneMask,
    exact_floor,
    prunable_set,
)
from app.nn.models import build_lenet
from app.services.pruning import (
    apply_mask,
    cartesian_distance,
    complement,
    partition,
    random_mask,
    total_distance,
)


class TestPrunableSet:
    def test_default_excludes_output_layer_and_biases(self, tiny_net):
        prunable = prunable_set(tiny_net)
        assert [s.name for s in prunable.segments] == ["conv1.weight", "fc1.weight"]
        assert prunable.size == 18 + 90

    def test_include_output_and_biases(self, tiny_net):
        prunable = prunable_set(tiny_net, include_output_layer=True, include_biases=True)
        assert prunable.size == tiny_net.parameters.size

    def test_lenet_s_default_size(self):
        net = build_lenet("lenet-s")
        # everything except fc3 and the biases
        assert prunable_set(net).size == 1200 + 12800 + 204800 + 32768


class TestRandomMask:
    def test_exact_floor(self):
        assert exact_floor(0.57 * 100) == 57
        assert exact_floor(0.5 * 7) == 3

    @pytest.mark.parametrize("sparsity", [0.0, 0.1, 0.5, 0.57, 0.9])
    def test_global_quota_is_exact(self, sparsity):
        prunable = PrunableSet.flat(1000)
        mask = random_mask(0, prunable, sparsity)
        assert len(mask) - mask.kept == exact_floor(sparsity * 1000)

    def test_layerwise_quota_per_layer(self, tiny_net):
        prunable = prunable_set(tiny_net)
        mask = random_mask(1, prunable, 0.5, scope=MaskScope.LAYERWISE)
        for segment in prunable.segments:
            bits = mask.bits[segment.offset:segment.offset + segment.size]
            assert segment.size - np.count_nonzero(bits) == exact_floor(0.5 * segment.size)

    def test_neuron_granularity_drops_whole_units(self, tiny_net):
        prunable = prunable_set(tiny_net)
        mask = random_mask(2, prunable, 0.5, granularity=Granularity.NEURON)
        for segment in prunable.segments:
            rows = mask.bits[segment.offset:segment.offset + segment.size].reshape(segment.units, -1)
            assert np.all(rows.all(axis=1) | ~rows.any(axis=1))
            assert np.count_nonzero(~rows.any(axis=1)) == exact_floor(0.5 * segment.units)

    def test_neuron_granularity_prunes_dead_unit_bias(self, tiny_net):
        mask = random_mask(2, prunable_set(tiny_net), 0.5, granularity=Granularity.NEURON)
        child = apply_mask(tiny_net, mask)
        keep = child.keep_arrays()
        assert np.count_nonzero(keep["fc1.bias"] == 0) == 2
        assert np.all(child.parameters["fc1.bias"][keep["fc1.bias"] == 0] == 0)

    def test_seed_determinism(self):
        prunable = PrunableSet.flat(500)
        assert random_mask(9, prunable, 0.3) == random_mask(9, prunable, 0.3)
        assert random_mask(9, prunable, 0.3) != random_mask(10, prunable, 0.3)

    @pytest.mark.parametrize("sparsity", [-0.1, 1.0])
    def test_sparsity_out_of_range(self, sparsity):
        with pytest.raises(MaskError):
            random_mask(0, PrunableSet.flat(10), sparsity)


class TestComplementAndPartition:
    def test_complement_properties(self):
        prunable = PrunableSet.flat(400)
        mask = random_mask(3, prunable, 0.5)
        anti = complement(mask)
        assert not np.any(mask.bits & anti.bits)
        assert np.all(mask.bits | anti.bits)
        assert cartesian_distance(mask, anti) == pytest.approx(math.sqrt(400))
        assert total_distance([mask, anti]) == pytest.approx(2 * math.sqrt(400))

    def test_complement_is_involution(self):
        mask = random_mask(4, PrunableSet.flat(64), 0.5)
        assert complement(complement(mask)) == mask

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_partition_disjoint_covering_balanced(self, tiny_net, n):
        prunable = prunable_set(tiny_net)
        masks = partition(7, prunable, n)
        stacked = np.stack([m.bits for m in masks]).astype(int)
        np.testing.assert_array_equal(stacked.sum(axis=0), 1)
        kept = [m.kept for m in masks]
        assert max(kept) - min(kept) <= 1
        assert sum(kept) == prunable.size

    def test_partition_union_restores_parent(self, tiny_net):
        masks = partition(1, prunable_set(tiny_net), 3)
        children = [apply_mask(tiny_net, m) for m in masks]
        parent = tiny_net.parameters.flatten()
        indices = prunable_set(tiny_net).indices
        total = sum(child.parameters.flatten() for child in children)
        np.testing.assert_array_equal(total[indices], parent[indices])

    def test_partition_rejects_n_below_two(self):
        with pytest.raises(MaskError):
            partition(0, PrunableSet.flat(10), 1)

    def test_partition_rejects_more_masks_than_bits(self):
        with pytest.raises(MaskError):
            partition(0, PrunableSet.flat(3), 4)


class TestDistances:
    def test_total_distance_matches_brute_force(self):
        prunable = PrunableSet.flat(20)
        masks = [random_mask(seed, prunable, 0.5) for seed in range(3)]
        expected = sum(math.sqrt(sum(x != y for x, y in zip(a.bits, b.bits)))
                       for a, b in itertools.product(masks, repeat=2))
        assert total_distance(masks) == pytest.approx(expected)

    def test_identical_masks_have_zero_distance(self):
        mask = random_mask(0, PrunableSet.flat(30), 0.4)
        assert total_distance([mask, mask, mask]) == 0.0

    def test_length_mismatch(self):
        a = random_mask(0, PrunableSet.flat(10), 0.5)
        b = random_mask(0, PrunableSet.flat(12), 0.5)
        with pytest.raises(MaskError):
            cartesian_distance(a, b)


class TestMaskStatistics:
    BITS = 100_000

    def test_independent_masks_hamming_near_binomial_mean(self):
        prunable = PrunableSet.flat(self.BITS)
        a, b = random_mask(11, prunable, 0.5), random_mask(12, prunable, 0.5)
        hamming = int(np.count_nonzero(a.bits != b.bits))
        mean, sigma = self.BITS / 2, math.sqrt(self.BITS / 4)
        assert abs(hamming - mean) <= 3 * sigma

    def test_complement_keeps_half_sparsity(self):
        mask = random_mask(5, PrunableSet.flat(self.BITS), 0.5)
        assert mask.sparsity == 0.5
        assert complement(mask).sparsity == 0.5
        assert complement(mask).kept == self.BITS // 2

    def test_pairwise_distances_in_expected_range(self):
        prunable = PrunableSet.flat(self.BITS)
        masks = [random_mask(seed, prunable, 0.5) for seed in range(4)]
        sigma = math.sqrt(self.BITS / 4)
        low, high = math.sqrt(self.BITS / 2 - 4 * sigma), math.sqrt(self.BITS / 2 + 4 * sigma)
        for a, b in itertools.combinations(masks, 2):
            assert low <= cartesian_distance(a, b) <= high
            assert cartesian_distance(a, b) < cartesian_distance(a, complement(a)) == math.sqrt(self.BITS)
        n = len(masks)
        assert n * (n - 1) * low <= total_distance(masks) <= n * (n - 1) * high


class TestMaskEncoding:
    @pytest.mark.parametrize("size", [1, 63, 64, 65, 130])
    def test_word_round_trip(self, size):
        prunable = PrunableSet.flat(size)
        mask = PruneMask(np.random.default_rng(size).random(size) < 0.5, prunable)
        words = mask.to_words()
        assert words.dtype == np.dtype("<u8")
        assert words.size == -(-size // 64)
        assert PruneMask.from_words(words, size, prunable) == mask

    def test_bit_order(self):
        bits = np.zeros(70, dtype=bool)
        bits[[0, 3, 64]] = True
        words = PruneMask(bits, PrunableSet.flat(70)).to_words()
        assert int(words[0]) == 0b1001
        assert int(words[1]) == 1

    def test_wrong_bit_count(self):
        with pytest.raises(MaskError):
            PruneMask(np.ones(5, dtype=bool), PrunableSet.flat(6))

    def test_bits_are_read_only(self):
        mask = PruneMask(np.ones(4, dtype=bool), PrunableSet.flat(4))
        with pytest.raises(ValueError):
            mask.bits[0] = False


class TestApplyMask:
    def test_zeroes_pruned_and_keeps_rest(self, tiny_net):
        mask = random_mask(5, prunable_set(tiny_net), 0.5)
        child = apply_mask(tiny_net, mask)
        parent = tiny_net.parameters.flatten()
        flat = child.parameters.flatten()
        indices = prunable_set(tiny_net).indices
        np.testing.assert_array_equal(flat[indices[~mask.bits]], 0.0)
        np.testing.assert_array_equal(flat[indices[mask.bits]], parent[indices[mask.bits]])
        assert child.mask == mask

    def test_parent_untouched(self, tiny_net):
        before = tiny_net.parameters.flatten().copy()
        apply_mask(tiny_net, random_mask(5, prunable_set(tiny_net), 0.9))
        np.testing.assert_array_equal(tiny_net.parameters.flatten(), before)
        assert tiny_net.mask is None

    def test_foreign_mask_rejected(self, tiny_net):
        with pytest.raises(MaskError):
            apply_mask(tiny_net, random_mask(0, PrunableSet.flat(108), 0.5))
