"""Client and server report lines carrying cache occupancy and node state.

The line grammar extends the standard media-client/media-server metadata
key-value syntax with "x-hc-" keys:

    key=value(,key=value)*        keys sorted lexicographically on encode

    x-hc-id    node id (integer)
    x-hc-role  s | l | cdn
    x-hc-join  join time, seconds, 3 decimals      (client reports)
    x-hc-batt  battery percent, integer            (client reports)
    x-hc-dev   pc | mob                            (client reports)
    x-hc-play  0 | 1                               (client reports)
    x-hc-bw    available bandwidth, integer bps    (client reports)
    x-hc-cache cached segments as channel.index.rung triplets joined by "|"
    x-hc-fill  cache fill ratio, 3 decimals        (server reports)

Unknown keys are ignored on decode for forward compatibility.
"""

from __future__ import annotations

from dataclasses import dataclass

from .costs import DeviceClass
from .media import SegmentRef
from .registry import NodeKind, NodeView, PeerRole, Registry


class ReportParseError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(f"{message}" + (f" (key {key!r})" if key else ""))
        self.key = key


@dataclass(frozen=True)
class CmcdReport:
    """Full-state client report sent every monitoring interval."""

    peer_id: int
    role: PeerRole
    join_time_s: float
    battery_pct: int
    device: DeviceClass
    playing: bool
    cached: tuple[SegmentRef, ...]
    last_mile_bps: int


@dataclass(frozen=True)
class CmsdReport:
    """Cache occupancy report from a CDN server."""

    server_id: int
    cached: tuple[SegmentRef, ...]
    fill_ratio: float


def _encode_cache(refs) -> str:
    return "|".join(f"{r.channel_id}.{r.segment_index}.{r.rung_index}" for r in refs)


def encode_report(report: CmcdReport | CmsdReport) -> str:
    if isinstance(report, CmcdReport):
        pairs = {
            "x-hc-batt": str(int(report.battery_pct)),
            "x-hc-bw": str(int(report.last_mile_bps)),
            "x-hc-cache": _encode_cache(report.cached),
            "x-hc-dev": report.device.value,
            "x-hc-id": str(report.peer_id),
            "x-hc-join": f"{report.join_time_s:.3f}",
            "x-hc-play": "1" if report.playing else "0",
            "x-hc-role": report.role.value,
        }
    else:
        pairs = {
            "x-hc-cache": _encode_cache(report.cached),
            "x-hc-fill": f"{report.fill_ratio:.3f}",
            "x-hc-id": str(report.server_id),
            "x-hc-role": "cdn",
        }
    return ",".join(f"{k}={v}" for k, v in sorted(pairs.items()))


def _decode_cache(value: str) -> tuple[SegmentRef, ...]:
    if not value:
        return ()
    refs = []
    for triplet in value.split("|"):
        parts = triplet.split(".")
        if len(parts) != 3:
            raise ReportParseError(f"bad cache triplet {triplet!r}", "x-hc-cache")
        try:
            c, i, r = (int(p) for p in parts)
        except ValueError:
            raise ReportParseError(f"non-integer cache triplet {triplet!r}", "x-hc-cache")
        if c < 0 or i < 0 or r < 0:
            raise ReportParseError(f"negative field in triplet {triplet!r}", "x-hc-cache")
        refs.append(SegmentRef(c, i, r))
    return tuple(refs)


def _int_field(fields: dict, key: str, lo: int = 0, hi: int | None = None) -> int:
    try:
        value = int(fields[key])
    except ValueError:
        raise ReportParseError(f"non-integer value {fields[key]!r}", key)
    if value < lo or (hi is not None and value > hi):
        raise ReportParseError(f"value {value} out of range", key)
    return value


def decode_report(line: str) -> CmcdReport | CmsdReport:
    """Inverse of encode_report; key order-insensitive; unknown keys skipped."""
    fields: dict[str, str] = {}
    for part in line.split(","):
        key, sep, value = part.partition("=")
        if not sep or not key:
            raise ReportParseError(f"malformed pair {part!r}")
        fields[key] = value

    def require(*keys: str) -> None:
        for k in keys:
            if k not in fields:
                raise ReportParseError("missing required key", k)

    require("x-hc-role", "x-hc-id", "x-hc-cache")
    role = fields["x-hc-role"]
    cached = _decode_cache(fields["x-hc-cache"])
    if role == "cdn":
        require("x-hc-fill")
        try:
            fill = float(fields["x-hc-fill"])
        except ValueError:
            raise ReportParseError(f"bad ratio {fields['x-hc-fill']!r}", "x-hc-fill")
        if not 0.0 <= fill <= 1.0:
            raise ReportParseError(f"fill ratio {fill} out of range", "x-hc-fill")
        return CmsdReport(_int_field(fields, "x-hc-id"), cached, fill)
    if role in ("s", "l"):
        require("x-hc-join", "x-hc-batt", "x-hc-dev", "x-hc-play", "x-hc-bw")
        try:
            join = float(fields["x-hc-join"])
        except ValueError:
            raise ReportParseError(f"bad join time {fields['x-hc-join']!r}", "x-hc-join")
        if join < 0:
            raise ReportParseError("negative join time", "x-hc-join")
        dev = fields["x-hc-dev"]
        if dev not in (DeviceClass.PC.value, DeviceClass.MOBILE.value):
            raise ReportParseError(f"unknown device {dev!r}", "x-hc-dev")
        play = fields["x-hc-play"]
        if play not in ("0", "1"):
            raise ReportParseError(f"bad playing flag {play!r}", "x-hc-play")
        return CmcdReport(
            peer_id=_int_field(fields, "x-hc-id"),
            role=PeerRole(role),
            join_time_s=join,
            battery_pct=_int_field(fields, "x-hc-batt", 0, 100),
            device=DeviceClass(dev),
            playing=play == "1",
            cached=cached,
            last_mile_bps=_int_field(fields, "x-hc-bw"),
        )
    raise ReportParseError(f"unknown role {role!r}", "x-hc-role")


def apply_report(
    registry: Registry, report: CmcdReport | CmsdReport, now_s: float
) -> Registry:
    """Replace the sender's registry view atomically; stale reports are ignored."""
    if isinstance(report, CmcdReport):
        registry.upsert_peer(
            NodeView(
                node_id=report.peer_id,
                kind=NodeKind.PEER,
                role=report.role,
                cached=frozenset(report.cached),
                join_time_s=report.join_time_s,
                battery_pct=float(report.battery_pct),
                device=report.device,
                playing=report.playing,
                available_bps=float(report.last_mile_bps),
                report_time_s=now_s,
            )
        )
    else:
        registry.upsert_cdn(
            NodeView(
                node_id=report.server_id,
                kind=NodeKind.CDN,
                cached=frozenset(report.cached),
                report_time_s=now_s,
            )
        )
    return registry
