"""The tracker's registry: per-node state snapshots fed by periodic reports."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import AbstractSet

from .costs import DeviceClass
from .media import SegmentRef


class NodeKind(Enum):
    PEER = "peer"
    VTS = "vts"
    CDN = "cdn"
    ORIGIN = "origin"


class PeerRole(str, Enum):
    SEEDER = "s"
    LEECHER = "l"


@dataclass
class NodeView:
    """What the tracker believes about one node, as of its last report.

    available_bps is the equal-share bandwidth a new flow from/to this node
    would get. For the VTS itself the cache and transcode queue fields are
    live rather than reported. group and transcode_spent_battery_pct are
    tracker-side bookkeeping preserved across report applications.
    """

    node_id: int
    kind: NodeKind
    role: PeerRole | None = None
    cached: AbstractSet[SegmentRef] = frozenset()
    join_time_s: float = 0.0
    battery_pct: float = 100.0
    device: DeviceClass | None = None
    playing: bool = False
    available_bps: float = 0.0  # share a new flow served BY this node would get
    down_bps: float = 0.0  # peers only: last-mile share for segments sent TO it
    transcode_slots_free: int = 0
    transcode_queue_len: int = 0
    report_time_s: float = 0.0
    group: int = 0
    transcode_spent_battery_pct: float = 0.0

    def report_age_s(self, now_s: float) -> float:
        return max(0.0, now_s - self.report_time_s)


class Registry:
    """Latest applied view per node; peers and CDN servers keyed by id."""

    __slots__ = ("peers", "cdns", "vts", "origin")

    def __init__(self) -> None:
        self.peers: dict[int, NodeView] = {}
        self.cdns: dict[int, NodeView] = {}
        self.vts: NodeView | None = None
        self.origin: NodeView | None = None

    def upsert_peer(self, view: NodeView) -> bool:
        """Replace the peer's view unless an older-timestamped one arrives."""
        old = self.peers.get(view.node_id)
        if old is not None:
            if view.report_time_s < old.report_time_s:
                return False
            view = replace(
                view,
                group=old.group,
                down_bps=old.down_bps,
                transcode_spent_battery_pct=old.transcode_spent_battery_pct,
            )
        self.peers[view.node_id] = view
        return True

    def upsert_cdn(self, view: NodeView) -> bool:
        old = self.cdns.get(view.node_id)
        if old is not None and view.report_time_s < old.report_time_s:
            return False
        self.cdns[view.node_id] = view
        return True

    def remove_peer(self, peer_id: int) -> None:
        self.peers.pop(peer_id, None)

    def peers_in_group(self, group: int) -> list[NodeView]:
        return [p for p in self.peers.values() if p.group == group]
