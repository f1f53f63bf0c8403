"""Macro-region balanced batch construction across datasets.

A batch holds, for each of ``n`` datasets, ``m`` rounds of one draw from each
of the 9 macro regions, so its size is always ``n * 9 * m``. Order is
dataset-major, then round, then region ``(mc, mr)`` lexicographic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .exceptions import EmptyDataset
from .va_space import macro_indices

N_REGIONS = 9
REGION_COORDS = [(mc, mr) for mc in range(3) for mr in range(3)]


def region_id(mc: int, mr: int) -> int:
    return mc * 3 + mr


def _fallback_table(nonempty: Sequence[bool]) -> list[int]:
    """Nearest non-empty region by Chebyshev distance, ties to lowest (mc, mr)."""
    table = []
    for r, (mc, mr) in enumerate(REGION_COORDS):
        if nonempty[r]:
            table.append(r)
            continue
        best = min(
            (max(abs(mc - c), abs(mr - d)), (c, d), s)
            for s, (c, d) in enumerate(REGION_COORDS)
            if nonempty[s]
        )
        table.append(best[2])
    return table


@dataclass
class SampleIndex:
    names: list
    buckets: list  # per dataset: 9 int arrays of local segment ids
    fallback: list  # per dataset: 9 source-region ids
    sizes: list

    @property
    def n_datasets(self):
        return len(self.names)

    def empty_regions(self, dataset: int) -> list:
        return [r for r, b in enumerate(self.buckets[dataset]) if len(b) == 0]

    def batch_size(self, m: int) -> int:
        return self.n_datasets * N_REGIONS * m


@dataclass(frozen=True)
class ContrastBatch:
    dataset: np.ndarray  # (B,) dataset position in the index
    segment: np.ndarray  # (B,) local segment id within its dataset
    va_points: np.ndarray  # (B, 2)
    region: np.ndarray  # (B,) requested macro region
    source_region: np.ndarray  # (B,) region actually drawn from (differs on fallback)

    def __len__(self):
        return len(self.segment)

    @property
    def fallback_mask(self):
        return self.region != self.source_region


def build_index(datasets: Mapping[str, np.ndarray]) -> SampleIndex:
    """Bucket every dataset's segments by macro region.

    ``datasets`` maps a dataset name to an (N, 2) array of V-A points.
    """
    names, buckets, fallback, sizes = [], [], [], []
    for name, points in datasets.items():
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(pts) == 0:
            raise EmptyDataset(f"dataset {name!r} has no segments")
        macro = macro_indices(pts)
        rid = macro[:, 0] * 3 + macro[:, 1]
        per_region = [np.flatnonzero(rid == r) for r in range(N_REGIONS)]
        names.append(name)
        buckets.append(per_region)
        fallback.append(_fallback_table([len(b) > 0 for b in per_region]))
        sizes.append(len(pts))
    if not names:
        raise EmptyDataset("no datasets given")
    return SampleIndex(names, buckets, fallback, sizes)


class RegionBalancedSampler:
    """Streaming sampler: with replacement across batches, without within a round."""

    def __init__(self, index: SampleIndex, va_points: Sequence[np.ndarray], m: int, seed=None):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.index = index
        self.va_points = [np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in va_points]
        self.m = m
        self.rng = np.random.default_rng(seed)

    @property
    def batch_size(self):
        return self.index.batch_size(self.m)

    def next_batch(self) -> ContrastBatch:
        ds, seg, reg, src = [], [], [], []
        for d in range(self.index.n_datasets):
            buckets = self.index.buckets[d]
            fb = self.index.fallback[d]
            for _ in range(self.m):
                used: dict[int, set] = {}
                for r in range(N_REGIONS):
                    s = fb[r]
                    bucket = buckets[s]
                    taken = used.setdefault(s, set())
                    if len(taken) < len(bucket):
                        free = [i for i in range(len(bucket)) if i not in taken] if taken else None
                        k = int(self.rng.integers(len(bucket))) if free is None else free[int(self.rng.integers(len(free)))]
                    else:
                        k = int(self.rng.integers(len(bucket)))
                    taken.add(k)
                    ds.append(d)
                    seg.append(int(bucket[k]))
                    reg.append(r)
                    src.append(s)
        ds = np.asarray(ds)
        seg = np.asarray(seg)
        va = np.stack([self.va_points[d][s] for d, s in zip(ds, seg)])
        return ContrastBatch(ds, seg, va, np.asarray(reg), np.asarray(src))

    def __iter__(self):
        while True:
            yield self.next_batch()


class UniformSampler:
    """Plain uniform batches of a fixed size; used by the augmentation-only arm."""

    def __init__(self, index: SampleIndex, va_points: Sequence[np.ndarray], batch_size: int, seed=None):
        self.index = index
        self.va_points = [np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in va_points]
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._offsets = np.cumsum([0] + list(index.sizes))

    def next_batch(self) -> ContrastBatch:
        total = self._offsets[-1]
        flat = self.rng.choice(total, size=self.batch_size, replace=self.batch_size > total)
        ds = np.searchsorted(self._offsets, flat, side="right") - 1
        seg = flat - self._offsets[ds]
        va = np.stack([self.va_points[d][s] for d, s in zip(ds, seg)])
        macro = macro_indices(va)
        rid = macro[:, 0] * 3 + macro[:, 1]
        return ContrastBatch(ds, seg, va, rid, rid)
