import numpy as np
import pytest

from emod.dataio import MACRO_CENTERS
from emod.exceptions import EmptyDataset
from emod.sampler import RegionBalancedSampler, UniformSampler, build_index, _fallback_table


def sampler_for(datasets, m, seed=0):
    index = build_index(datasets)
    return RegionBalancedSampler(index, list(datasets.values()), m, seed=seed)


class TestBuildIndex:
    def test_all_neutral(self):
        index = build_index({"a": np.zeros((20, 2))})
        assert len(index.buckets[0][4]) == 20
        assert index.empty_regions(0) == [0, 1, 2, 3, 5, 6, 7, 8]

    def test_one_per_region(self):
        index = build_index({"a": np.array(MACRO_CENTERS)})
        assert [len(b) for b in index.buckets[0]] == [1] * 9

    def test_uniform_points(self, rng):
        index = build_index({"a": rng.uniform(-4, 4, (1000, 2))})
        sizes = [len(b) for b in index.buckets[0]]
        assert sum(sizes) == 1000 and min(sizes) > 0

    def test_buckets_are_disjoint(self, rng):
        index = build_index({"a": rng.uniform(-4, 4, (300, 2))})
        ids = np.concatenate(index.buckets[0])
        assert sorted(ids) == list(range(300))

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            build_index({"a": np.zeros((0, 2))})


class TestNextBatch:
    def test_paper_batch_size(self, rng):
        data = {f"d{i}": rng.uniform(-4, 4, (200, 2)) for i in range(8)}
        assert len(sampler_for(data, 4).next_batch()) == 288

    def test_small_batch_size(self, rng):
        data = {f"d{i}": rng.uniform(-4, 4, (100, 2)) for i in range(2)}
        assert len(sampler_for(data, 2).next_batch()) == 36

    def test_one_per_region(self):
        batch = sampler_for({"a": np.array(MACRO_CENTERS)}, 1).next_batch()
        assert len(batch) == 9
        assert sorted(batch.segment.tolist()) == list(range(9))
        np.testing.assert_array_equal(batch.region, np.arange(9))

    def test_order_is_dataset_round_region(self, rng):
        data = {f"d{i}": rng.uniform(-4, 4, (100, 2)) for i in range(3)}
        batch = sampler_for(data, 2).next_batch()
        np.testing.assert_array_equal(batch.dataset, np.repeat([0, 1, 2], 18))
        np.testing.assert_array_equal(batch.region, np.tile(np.arange(9), 6))

    def test_va_points_match_source(self, rng):
        data = {"a": rng.uniform(-4, 4, (100, 2)), "b": rng.uniform(-4, 4, (50, 2))}
        batch = sampler_for(data, 3).next_batch()
        pts = list(data.values())
        for d, s, va in zip(batch.dataset, batch.segment, batch.va_points):
            np.testing.assert_array_equal(va, pts[d][s])

    def test_seeded_determinism(self, rng):
        data = {"a": rng.uniform(-4, 4, (100, 2))}
        s1, s2 = sampler_for(data, 2, seed=5), sampler_for(data, 2, seed=5)
        for _ in range(5):
            assert np.array_equal(s1.next_batch().segment, s2.next_batch().segment)

    def test_fallback_to_nearest_region(self):
        # only regions (0,0) and (2,2) populated
        pts = np.array([[-3.0, -3.0]] * 4 + [[3.0, 3.0]] * 4)
        batch = sampler_for({"a": pts}, 1).next_batch()
        assert len(batch) == 9
        # (1,1) is equidistant; ties go to (0,0) -> region 0
        assert batch.source_region[4] == 0
        assert batch.source_region[5] == 8  # (1,2) is nearer (2,2)
        assert batch.fallback_mask.sum() == 7

    def test_fallback_tie_break(self):
        table = _fallback_table([r in (2, 6) for r in range(9)])
        # region (1,1) equidistant from (0,2) and (2,0): lowest lexicographic wins
        assert table[4] == 2

    def test_without_replacement_within_round(self):
        # region (0,0) has 3 samples and also serves regions (0,1) and (1,0) by fallback
        pts = np.array([[-3.0, -3.0]] * 3 + [[3.0, 3.0]] * 10)
        sampler = sampler_for({"a": pts}, 1, seed=1)
        for _ in range(20):
            batch = sampler.next_batch()
            from_region0 = batch.segment[batch.source_region == 0]
            assert len(set(from_region0.tolist())) == min(3, len(from_region0))


def test_uniform_sampler(rng):
    data = {"a": rng.uniform(-4, 4, (40, 2)), "b": rng.uniform(-4, 4, (60, 2))}
    index = build_index(data)
    batch = UniformSampler(index, list(data.values()), 36, seed=0).next_batch()
    assert len(batch) == 36
    assert set(batch.dataset.tolist()) <= {0, 1}


def test_members_drawn_uniformly_within_region():
    from scipy.stats import chisquare

    rng = np.random.default_rng(4)
    data = {"a": rng.uniform(-4, 4, (200, 2))}
    index = build_index(data)
    sampler = RegionBalancedSampler(index, list(data.values()), 3, seed=0)
    counts = np.zeros(200)
    for _ in range(3000):
        np.add.at(counts, sampler.next_batch().segment, 1)
    pvals = [chisquare(counts[b]).pvalue for b in index.buckets[0] if len(b) > 1]
    # Bonferroni over the nine regions
    assert min(pvals) > 0.01 / len(pvals)
