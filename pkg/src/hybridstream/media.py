"""Channels, the bitrate ladder, segment addressing and Zipf channel popularity."""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence


class Representation(NamedTuple):
    """One rung of the bitrate ladder."""

    rung_index: int
    bitrate_bps: int
    resolution_label: str


class SegmentRef(NamedTuple):
    """Addressable (channel, segment index, rung) triple."""

    channel_id: int
    segment_index: int
    rung_index: int


# Reconciled ladder: the coarse "2.4 / 4.2 Mbps" top rungs are stored at the
# exact bitrates the transcode table is keyed by, so every (source, target)
# rung pair has an exact table row.
DEFAULT_BITRATES_BPS = (89_000, 262_000, 791_000, 2_484_000, 4_219_000)
DEFAULT_LABELS = ("320p", "480p", "720p", "1080p", "1080p")


def make_ladder(
    bitrates_bps: Sequence[int], labels: Sequence[str]
) -> tuple[Representation, ...]:
    if len(bitrates_bps) != len(labels) or not bitrates_bps:
        raise ValueError("ladder needs one label per bitrate and at least one rung")
    for lo, hi in zip(bitrates_bps, bitrates_bps[1:]):
        if hi <= lo:
            raise ValueError("ladder bitrates must be strictly increasing")
    return tuple(
        Representation(i, int(b), str(lab))
        for i, (b, lab) in enumerate(zip(bitrates_bps, labels))
    )


def default_ladder() -> tuple[Representation, ...]:
    """The 5-rung ladder from 89 kbps / 320p up to 4219 kbps / 1080p."""
    return make_ladder(DEFAULT_BITRATES_BPS, DEFAULT_LABELS)


def zipf_weights(n: int, alpha: float) -> list[float]:
    """Normalized Zipf weights over ranks 1..n: w(k) = k^-alpha / sum_i i^-alpha."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    raw = [float(k) ** -alpha for k in range(1, n + 1)]
    total = sum(raw)
    return [w / total for w in raw]


@dataclass
class ChannelCatalog:
    """Live channel lineup; popularity rank equals channel id."""

    channel_count: int = 5
    segment_duration_s: float = 2.0
    zipf_alpha: float = 0.7
    popularity: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.channel_count < 1:
            raise ValueError("channel_count must be >= 1")
        if self.segment_duration_s <= 0:
            raise ValueError("segment_duration_s must be > 0")
        if not self.popularity:
            self.popularity = zipf_weights(self.channel_count, self.zipf_alpha)
        if len(self.popularity) != self.channel_count:
            raise ValueError("popularity length must match channel_count")
        if abs(sum(self.popularity) - 1.0) > 1e-9:
            raise ValueError("popularity must sum to 1")
        for a, b in zip(self.popularity, self.popularity[1:]):
            if b > a + 1e-12:
                raise ValueError("popularity must be non-increasing in channel rank")
        cum = []
        acc = 0.0
        for w in self.popularity:
            acc += w
            cum.append(acc)
        self._cumulative = cum


def sample_channel(rng_state: random.Random, catalog: ChannelCatalog) -> int:
    """Draw a channel id from the catalog popularity; advances rng_state only."""
    u = rng_state.random()
    idx = bisect.bisect_right(catalog._cumulative, u)
    return min(idx, catalog.channel_count - 1)


def segment_bytes(rep: Representation, duration_s: float) -> int:
    """Size of one segment at this rung, nearest-integer bytes."""
    if duration_s <= 0:
        raise ValueError("duration_s must be > 0")
    return round(rep.bitrate_bps * duration_s / 8.0)
