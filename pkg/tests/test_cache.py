import random

import pytest

from hybridstream.cache import CacheConfig, CacheConfigError, LruCache
from hybridstream.media import SegmentRef


def ref(i, rung=0, channel=0):
    return SegmentRef(channel, i, rung)


class ListLru:
    """Brute-force reference: most-recent-first list, O(n) everywhere."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.items = []

    def lookup(self, x):
        if x in self.items:
            self.items.remove(x)
            self.items.insert(0, x)
            return True
        return False

    def insert(self, x):
        if x in self.items:
            self.items.remove(x)
        self.items.insert(0, x)
        del self.items[self.capacity:]


def test_empty_cache_misses():
    cache = LruCache(4)
    assert not cache.lookup(ref(1))


def test_insert_then_hit():
    cache = LruCache(4)
    cache.insert(ref(1))
    assert cache.lookup(ref(1))


def test_lookup_refreshes_recency():
    cache = LruCache(2)
    a, b, c = ref(1), ref(2), ref(3)
    cache.insert(a)
    cache.insert(b)
    assert cache.lookup(a)
    evicted = cache.insert(c)
    assert evicted == [b]
    assert cache.lookup(a)
    assert not cache.lookup(b)


def test_capacity_one_evicts():
    cache = LruCache(1)
    assert cache.insert(ref(1)) == []
    assert cache.insert(ref(2)) == [ref(1)]


def test_reinsert_refreshes_without_eviction():
    cache = LruCache(2)
    cache.insert(ref(1))
    cache.insert(ref(2))
    assert cache.insert(ref(1)) == []
    assert cache.insert(ref(3)) == [ref(2)]


def test_zero_capacity_insert_rejected():
    cache = LruCache(0)
    with pytest.raises(CacheConfigError):
        cache.insert(ref(1))


def test_random_trace_matches_reference_oracle():
    rng = random.Random(1234)
    cache = LruCache(16)
    oracle = ListLru(16)
    for _ in range(10_000):
        x = ref(rng.randint(0, 40), rng.randint(0, 4))
        if rng.random() < 0.5:
            assert cache.lookup(x) == oracle.lookup(x)
        else:
            cache.insert(x)
            oracle.insert(x)
        assert len(cache) <= 16
    assert list(cache.refs()) == list(reversed(oracle.items))


def test_size_never_exceeds_capacity():
    rng = random.Random(99)
    for capacity in (1, 3, 8):
        cache = LruCache(capacity)
        for _ in range(2000):
            cache.insert(ref(rng.randint(0, 50)))
            assert len(cache) <= capacity


def test_snapshot_immutable_after_mutation():
    cache = LruCache(5)
    cache.insert(ref(1))
    snap = cache.occupancy_snapshot()
    cache.insert(ref(2))
    cache.insert(ref(3))
    assert snap.entries == (ref(1),)
    assert snap.fill_ratio == pytest.approx(0.2)


def test_snapshot_empty_and_full():
    cache = LruCache(5)
    snap = cache.occupancy_snapshot()
    assert snap.entries == ()
    assert snap.fill_ratio == 0.0
    for i in range(5):
        cache.insert(ref(i))
    assert cache.occupancy_snapshot().fill_ratio == pytest.approx(1.0)


def test_prune_respects_window_start():
    cache = LruCache(10)
    for i in range(8):
        cache.insert(ref(i))
    stale = cache.prune_older_than(5)
    assert sorted(r.segment_index for r in stale) == [0, 1, 2, 3, 4]
    assert all(r.segment_index >= 5 for r in cache.refs())


def test_capacity_config_segment_count():
    cfg = CacheConfig("segment-count", 5, "Peer")
    assert cfg.resolve() == 5


def test_capacity_config_fraction():
    cfg = CacheConfig("dataset-fraction", 0.40, "CDN")
    assert cfg.resolve(3750) == 1500
    assert CacheConfig("dataset-fraction", 0.05, "VTS").resolve(3750) == 187


def test_capacity_config_fraction_requires_dataset():
    with pytest.raises(CacheConfigError):
        CacheConfig("dataset-fraction", 0.4).resolve()


def test_capacity_config_validation():
    with pytest.raises(CacheConfigError):
        CacheConfig("bogus", 1)
    with pytest.raises(CacheConfigError):
        CacheConfig("dataset-fraction", 1.5)
    with pytest.raises(CacheConfigError):
        CacheConfig("segment-count", 2.5)
