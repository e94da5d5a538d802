"""Scenario configuration: defaults, validation, and flat key=value files.

A scenario file is plain text, one `key = value` per line, `#` comments.
Every field of ScenarioConfig is a key; list-valued fields take
comma-separated values, e.g.

    peer_count = 50
    policy = FULL
    abr = bola
    ladder_bitrates_bps = 89000,262000,791000,2484000,4219000
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .decision import POLICY_NAMES
from .media import (
    DEFAULT_BITRATES_BPS,
    DEFAULT_LABELS,
    ChannelCatalog,
    Representation,
    make_ladder,
)

ABR_NAMES = ("bola", "hybrid-proxy")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    # Run identity
    seed: int = 1
    duration_s: float = 600.0
    policy: str = "FULL"
    abr: str = "bola"
    selection_mode: str = "cost"

    # Population and overlay
    peer_count: int = 50
    group_count: int = 1
    seeder_fraction: float = 0.2
    mobile_fraction: float = 0.5
    join_spread_s: float = 30.0
    churn_enabled: bool = False
    churn_arrival_rate_per_s: float = 1.0
    churn_session_mean_s: float = 120.0

    # Content
    channel_count: int = 5
    segment_duration_s: float = 2.0
    zipf_alpha: float = 0.7
    ladder_bitrates_bps: tuple[int, ...] = DEFAULT_BITRATES_BPS
    ladder_labels: tuple[str, ...] = DEFAULT_LABELS
    live_window_segments: int = 150
    # Per-client target distance behind the live edge, drawn uniformly from
    # [min, max] at join; also the startup buffering target.
    live_delay_min_segments: int = 5
    live_delay_segments: int = 12

    # Topology
    cdn_count: int = 4
    link_cdn_bps: float = 100e6
    link_origin_bps: float = 50e6
    peer_down_bps: float = 20e6
    peer_up_bps: float = 5e6

    # Caches
    cdn_capacity_fraction: float = 0.40
    vts_capacity_fraction: float = 0.05
    peer_cache_segments: int = 5

    # Player
    buffer_cap_segments: int = 25
    abr_safety: float = 0.9
    bola_control_gain: float = 0.93
    bola_rebuffer_utility: float = 5.0

    # Serving resources
    monitoring_interval_s: float = 1.0
    vts_transcode_slots: int = 4
    peer_upload_slots: int = 2
    battery_floor_pct: float = 20.0
    battery_budget_pct: float = 2.0
    battery_init_min_pct: float = 60.0
    battery_init_max_pct: float = 100.0

    # Cost model knobs
    edge_power_watts: float = 200.0
    edge_speed_factor: float = 1.0
    reference_vmaf: tuple[float, ...] = (16.0, 46.0, 78.0, 95.0, 98.0)
    qoe_switch_weight: float = 1.0
    qoe_stall_weight: float = 1.0

    # Diagnostics
    debug_checks: bool = False

    def validate(self) -> None:
        sc = self
        checks = [
            (sc.duration_s >= 0, "duration_s must be >= 0"),
            (sc.peer_count >= 1, "peer_count must be >= 1"),
            (sc.group_count >= 1, "group_count must be >= 1"),
            (sc.peer_count >= sc.group_count, "peer_count must be >= group_count"),
            (0 < sc.seeder_fraction <= 1, "seeder_fraction must be in (0, 1]"),
            (0 <= sc.mobile_fraction <= 1, "mobile_fraction must be in [0, 1]"),
            (sc.channel_count >= 1, "channel_count must be >= 1"),
            (sc.segment_duration_s > 0, "segment_duration_s must be > 0"),
            (sc.zipf_alpha >= 0, "zipf_alpha must be >= 0"),
            (sc.live_window_segments >= 1, "live_window_segments must be >= 1"),
            (
                0 <= sc.live_delay_min_segments <= sc.live_delay_segments,
                "live_delay_min_segments must be in [0, live_delay_segments]",
            ),
            (
                sc.live_delay_segments < sc.live_window_segments,
                "live_delay_segments must be below live_window_segments",
            ),
            (sc.cdn_count >= 1, "cdn_count must be >= 1"),
            (sc.link_cdn_bps > 0, "link_cdn_bps must be > 0"),
            (sc.link_origin_bps > 0, "link_origin_bps must be > 0"),
            (sc.peer_down_bps > 0, "peer_down_bps must be > 0"),
            (sc.peer_up_bps > 0, "peer_up_bps must be > 0"),
            (0 < sc.cdn_capacity_fraction <= 1, "cdn_capacity_fraction must be in (0, 1]"),
            (0 < sc.vts_capacity_fraction <= 1, "vts_capacity_fraction must be in (0, 1]"),
            (sc.peer_cache_segments >= 1, "peer_cache_segments must be >= 1"),
            (sc.buffer_cap_segments >= 1, "buffer_cap_segments must be >= 1"),
            (0 < sc.abr_safety <= 1, "abr_safety must be in (0, 1]"),
            (sc.monitoring_interval_s > 0, "monitoring_interval_s must be > 0"),
            (sc.vts_transcode_slots >= 1, "vts_transcode_slots must be >= 1"),
            (sc.peer_upload_slots >= 1, "peer_upload_slots must be >= 1"),
            (sc.policy in POLICY_NAMES, f"policy must be one of {POLICY_NAMES}"),
            (sc.abr in ABR_NAMES, f"abr must be one of {ABR_NAMES}"),
            (
                sc.selection_mode in ("cost", "priority"),
                "selection_mode must be cost or priority",
            ),
            (
                len(sc.reference_vmaf) == len(sc.ladder_bitrates_bps),
                "reference_vmaf needs one value per ladder rung",
            ),
            (sc.churn_arrival_rate_per_s > 0, "churn_arrival_rate_per_s must be > 0"),
            (sc.churn_session_mean_s > 0, "churn_session_mean_s must be > 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        try:
            self.ladder()
        except ValueError as exc:
            raise ConfigError(str(exc))

    def ladder(self) -> tuple[Representation, ...]:
        return make_ladder(self.ladder_bitrates_bps, self.ladder_labels)

    def catalog(self) -> ChannelCatalog:
        return ChannelCatalog(self.channel_count, self.segment_duration_s, self.zipf_alpha)

    def dataset_segments(self) -> int:
        """Distinct segments in the live window across channels and rungs."""
        return self.live_window_segments * self.channel_count * len(self.ladder_bitrates_bps)


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "tuple[int, ...]":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "tuple[float, ...]":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if kind == "tuple[str, ...]":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}")


def parse_scenario(text: str) -> ScenarioConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    sc = ScenarioConfig(**values)
    sc.validate()
    return sc


def load_scenario(path: str | Path) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text())
