"""Client-side rung selection: buffer-based chooser and a throughput-buffer hybrid."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .media import Representation, segment_bytes

THROUGHPUT_WINDOW = 5  # harmonic mean over the last K segment downloads


@dataclass
class BolaParams:
    """Control gain and rebuffer-avoidance utility for the buffer-based chooser.

    Utilities are log segment-size ratios (u_0 = 0), so choices are invariant
    under uniform scaling of segment sizes.
    """

    control_gain: float = 0.93
    rebuffer_utility: float = 5.0

    def __post_init__(self) -> None:
        if self.control_gain <= 0 or self.rebuffer_utility <= 0:
            raise ValueError("control_gain and rebuffer_utility must be > 0")


@dataclass
class PlayerState:
    buffer_s: float = 0.0
    last_rung: int | None = None
    stalled: bool = False
    throughput_samples: deque = field(default_factory=lambda: deque(maxlen=THROUGHPUT_WINDOW))

    @property
    def throughput_est_bps(self) -> float | None:
        if not self.throughput_samples:
            return None
        return len(self.throughput_samples) / sum(1.0 / s for s in self.throughput_samples)

    def record_download(self, bps: float) -> None:
        if bps > 0:
            self.throughput_samples.append(bps)


def bola_choose(
    state: PlayerState,
    ladder: Sequence[Representation],
    params: BolaParams,
    segment_duration_s: float = 2.0,
) -> int:
    """Buffer-based choice: argmax of (V*(u_m + gp) - buffer) / size_m.

    Buffer is measured in segments; ties go to the lower rung.
    """
    if not ladder:
        raise ValueError("ladder must be non-empty")
    sizes = [segment_bytes(rep, segment_duration_s) for rep in ladder]
    buffer_segments = state.buffer_s / segment_duration_s
    v = params.control_gain
    gp = params.rebuffer_utility
    best, best_score = 0, None
    for m, size in enumerate(sizes):
        u = math.log(size / sizes[0])
        score = (v * (u + gp) - buffer_segments) / size
        if best_score is None or score > best_score:
            best, best_score = m, score
    return best


def hybrid_choose(
    state: PlayerState,
    ladder: Sequence[Representation],
    safety: float = 0.9,
    segment_duration_s: float = 2.0,
    params: BolaParams | None = None,
) -> int:
    """Throughput-driven choice with a low-buffer demotion.

    Picks the highest rung affordable at safety * estimated throughput, caps
    it one rung above the buffer-based choice, then demotes one rung when the
    buffer is below two segment durations.
    """
    if not ladder:
        raise ValueError("ladder must be non-empty")
    if not 0 < safety <= 1:
        raise ValueError("safety must be in (0, 1]")
    tput = state.throughput_est_bps or 0.0
    pick = 0
    for rep in ladder:
        if rep.bitrate_bps <= safety * tput:
            pick = rep.rung_index
    cap = bola_choose(state, ladder, params or BolaParams(), segment_duration_s) + 1
    pick = min(pick, cap, len(ladder) - 1)
    if state.buffer_s < 2 * segment_duration_s:
        pick = max(0, pick - 1)
    return pick
