"""LRU segment caches with role-dependent capacities and occupancy snapshots."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable

from .media import SegmentRef


class CacheConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CacheConfig:
    """Capacity policy for one node role.

    capacity_mode "segment-count" takes capacity_value as an absolute slot
    count; "dataset-fraction" resolves capacity_value against the number of
    distinct segments in the live window (window x channels x rungs).
    """

    capacity_mode: str
    capacity_value: float
    role: str = "Peer"

    def __post_init__(self) -> None:
        if self.capacity_mode not in ("segment-count", "dataset-fraction"):
            raise CacheConfigError(f"unknown capacity_mode {self.capacity_mode!r}")
        if self.capacity_mode == "segment-count":
            if self.capacity_value < 0 or self.capacity_value != int(self.capacity_value):
                raise CacheConfigError("segment-count capacity must be a non-negative integer")
        elif not 0 < self.capacity_value <= 1:
            raise CacheConfigError("dataset-fraction capacity must be in (0, 1]")

    def resolve(self, dataset_segments: int | None = None) -> int:
        if self.capacity_mode == "segment-count":
            return int(self.capacity_value)
        if dataset_segments is None:
            raise CacheConfigError("dataset-fraction capacity needs the dataset size")
        return max(1, int(self.capacity_value * dataset_segments))


@dataclass(frozen=True)
class CacheSnapshot:
    """Immutable occupancy snapshot: refs in LRU-to-MRU order plus fill ratio."""

    entries: tuple[SegmentRef, ...]
    fill_ratio: float


class LruCache:
    """Least-recently-used segment cache; size never exceeds capacity."""

    __slots__ = ("capacity_segments", "_entries")

    def __init__(self, capacity_segments: int):
        if capacity_segments < 0:
            raise CacheConfigError("capacity must be >= 0")
        self.capacity_segments = capacity_segments
        self._entries: OrderedDict[SegmentRef, None] = OrderedDict()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, ref: SegmentRef) -> bool:
        # Membership probe without an LRU touch; use lookup() when serving.
        return ref in self._entries

    def __iter__(self):
        return iter(self._entries)

    def lookup(self, ref: SegmentRef) -> bool:
        """Hit test that refreshes recency on hit."""
        if ref in self._entries:
            self._entries.move_to_end(ref)
            return True
        return False

    def insert(self, ref: SegmentRef) -> list[SegmentRef]:
        """Insert (or refresh) ref as most-recent; returns evicted refs."""
        if self.capacity_segments < 1:
            raise CacheConfigError("cannot insert into a zero-capacity cache")
        if ref in self._entries:
            self._entries.move_to_end(ref)
            return []
        self._entries[ref] = None
        evicted = []
        while len(self._entries) > self.capacity_segments:
            evicted.append(self._entries.popitem(last=False)[0])
        return evicted

    def occupancy_snapshot(self) -> CacheSnapshot:
        fill = len(self._entries) / self.capacity_segments if self.capacity_segments else 0.0
        return CacheSnapshot(tuple(self._entries), fill)

    def prune_older_than(self, min_segment_index: int) -> list[SegmentRef]:
        """Drop every entry whose segment index fell out of the live window."""
        stale = [ref for ref in self._entries if ref.segment_index < min_segment_index]
        for ref in stale:
            del self._entries[ref]
        return stale

    def remove(self, ref: SegmentRef) -> bool:
        if ref in self._entries:
            del self._entries[ref]
            return True
        return False

    def refs(self) -> Iterable[SegmentRef]:
        """Live read-only view of cached refs (LRU to MRU)."""
        return self._entries.keys()
