"""Deterministic discrete-event engine for the hybrid delivery system.

One engine instance owns one run: live segment production, client request
loops driven by the chosen ABR, tracker decisions per policy, fluid
equal-share bandwidth over an abstract star topology (every CDN/origin flow
traverses the tracker), transcode slot occupancy, peer churn, and
monitoring-interval report application. Runs are bit-reproducible for a
given scenario and seed.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass
from typing import Sequence

from . import abr as abr_mod
from .cache import LruCache
from .config import ScenarioConfig
from .costs import CostTables, DeviceClass, UnreachableSourceError
from .decision import Action, Decision, DecisionContext, decide
from .media import SegmentRef, sample_channel, segment_bytes
from .messaging import CmcdReport, CmsdReport, apply_report
from .metrics import MetricsSummary, RequestRecord, delivered_vmaf_of, summarize
from .registry import NodeKind, NodeView, PeerRole, Registry

# ---------------------------------------------------------------------------
# Topology and the fluid bandwidth model


class Link:
    """One capacity-constrained link; tracks the flows currently crossing it."""

    __slots__ = ("capacity_bps", "name", "flows")

    def __init__(self, capacity_bps: float, name: str = ""):
        self.capacity_bps = capacity_bps
        self.name = name
        self.flows: dict[Flow, None] = {}  # insertion-ordered for determinism

    def share_for_new_flow(self) -> float:
        return self.capacity_bps / (len(self.flows) + 1)


class Flow:
    __slots__ = (
        "links", "bits_left", "rate", "last_t", "epoch", "alive",
        "cb", "start_t", "rec", "src_peer",
    )

    def __init__(self, links, nbytes, cb, start_t, rec=None, src_peer=None):
        self.links = links
        self.bits_left = nbytes * 8.0
        self.rate = 0.0
        self.last_t = start_t
        self.epoch = 0
        self.alive = True
        self.cb = cb
        self.start_t = start_t
        self.rec = rec
        self.src_peer = src_peer


@dataclass
class Topology:
    """Star topology around the tracker: ingress links plus per-peer last miles."""

    origin_link: Link
    cdn_links: list[Link]

    @classmethod
    def build(cls, sc: ScenarioConfig) -> "Topology":
        return cls(
            origin_link=Link(sc.link_origin_bps, "origin-vts"),
            cdn_links=[Link(sc.link_cdn_bps, f"cdn{i}-vts") for i in range(sc.cdn_count)],
        )


def bandwidth_reallocate(flow_links: Sequence[Sequence[Link]]) -> list[float]:
    """Equal-share rates for a set of flows given the links each traverses.

    Each link's capacity is divided equally among the flows crossing it; a
    flow's rate is the minimum share over its links.
    """
    counts: dict[int, int] = {}
    for links in flow_links:
        for link in links:
            counts[id(link)] = counts.get(id(link), 0) + 1
    return [
        min(link.capacity_bps / counts[id(link)] for link in links) if links else 0.0
        for links in flow_links
    ]


# ---------------------------------------------------------------------------
# Overlay construction and churn


@dataclass
class Overlay:
    groups: list[list[int]]
    role_of: dict[int, PeerRole]
    parent_of: dict[int, int | None]


def overlay_build(
    peers: Sequence[tuple[int, float]], group_count: int, seeder_fraction: float
) -> Overlay:
    """Tree-mesh overlay: round-robin groups, earliest joiners become seeders.

    peers are (peer_id, join_time_s) in arrival order. Within a group the
    earliest-joining ceil(fraction * size) peers are seeders (a full mesh);
    each leecher attaches to the seeder with the fewest children.
    """
    if len(peers) < group_count:
        raise ValueError("need at least one peer per group")
    groups: list[list[int]] = [[] for _ in range(group_count)]
    join_of = {}
    for ordinal, (pid, join_t) in enumerate(peers):
        groups[ordinal % group_count].append(pid)
        join_of[pid] = join_t
    role_of: dict[int, PeerRole] = {}
    parent_of: dict[int, int | None] = {}
    for members in groups:
        ordered = sorted(members, key=lambda p: (join_of[p], p))
        n_seed = max(1, math.ceil(seeder_fraction * len(ordered)))
        seeders = ordered[:n_seed]
        children = {s: 0 for s in seeders}
        for pid in seeders:
            role_of[pid] = PeerRole.SEEDER
            parent_of[pid] = None
        for pid in ordered[n_seed:]:
            role_of[pid] = PeerRole.LEECHER
            parent = min(seeders, key=lambda s: (children[s], join_of[s], s))
            children[parent] += 1
            parent_of[pid] = parent
    return Overlay(groups, role_of, parent_of)


def churn_schedule(
    rng: random.Random, sc: ScenarioConfig
) -> list[tuple[float, str, int]]:
    """Precomputed (time, "join" | "leave", peer_id) events for one run.

    With churn disabled every peer joins at a staggered uniform time within
    the join spread and never leaves. With churn enabled, arrivals are
    Poisson (dropped while the target population is full) and session
    lengths are exponential.
    """
    events: list[tuple[float, int, str, int]] = []
    if not sc.churn_enabled:
        join_times = sorted(rng.uniform(0.0, sc.join_spread_s) for _ in range(sc.peer_count))
        for pid, t in enumerate(join_times):
            if t < sc.duration_s:
                events.append((t, 1, "join", pid))
    else:
        t = 0.0
        pid = 0
        pending_leaves: list[float] = []
        active = 0
        while True:
            t += rng.expovariate(sc.churn_arrival_rate_per_s)
            if t >= sc.duration_s:
                break
            while pending_leaves and pending_leaves[0] <= t:
                heapq.heappop(pending_leaves)
                active -= 1
            life = rng.expovariate(1.0 / sc.churn_session_mean_s)
            if active >= sc.peer_count:
                continue
            events.append((t, 1, "join", pid))
            leave_t = t + life
            if leave_t < sc.duration_s:
                events.append((leave_t, 0, "leave", pid))
            heapq.heappush(pending_leaves, leave_t)
            active += 1
            pid += 1
    events.sort()
    return [(t, kind, pid) for t, _, kind, pid in events]


# ---------------------------------------------------------------------------
# Engine internals

EV_PRODUCE, EV_JOIN, EV_LEAVE, EV_TICK, EV_REQUEST, EV_FLOW_DONE, EV_TR_DONE = range(7)

VTS_ID = 0
ORIGIN_ID = 0


class _Peer:
    __slots__ = (
        "pid", "group", "device", "role", "join_t", "battery", "spent_pct",
        "cache", "up_link", "down_link", "alive", "channel", "live_delay",
        "next_index", "player", "buffer_t", "started", "unattributed_stall",
        "uploads", "upload_q", "tr_busy", "tr_q", "pending", "request_token",
    )

    def __init__(self, pid, group, device, join_t, battery, channel,
                 cache_capacity, up_bps, down_bps):
        self.pid = pid
        self.group = group
        self.device = device
        self.role = PeerRole.LEECHER
        self.join_t = join_t
        self.battery = battery
        self.spent_pct = 0.0
        self.cache = LruCache(cache_capacity)
        self.up_link = Link(up_bps, f"peer{pid}-up")
        self.down_link = Link(down_bps, f"peer{pid}-down")
        self.alive = True
        self.channel = channel
        self.live_delay = 0
        self.next_index = 0
        self.player = abr_mod.PlayerState()
        self.buffer_t = join_t
        self.started = False
        self.unattributed_stall = 0.0
        self.uploads = 0
        self.upload_q: list = []
        self.tr_busy = False
        self.tr_q: list = []
        self.pending: _Request | None = None
        self.request_token = 0

    def playing_at(self, now: float) -> bool:
        return self.started and self.player.buffer_s > (now - self.buffer_t)


class _Request:
    __slots__ = (
        "pid", "ref", "issue_t", "failed_actions", "trans_s", "comp_s",
        "attempts", "decision", "done", "tr_playing", "flow", "owns_job",
    )

    def __init__(self, pid, ref, issue_t):
        self.pid = pid
        self.ref = ref
        self.issue_t = issue_t
        self.failed_actions: set[Action] = set()
        self.trans_s = 0.0
        self.comp_s = 0.0
        self.attempts = 0
        self.decision: Decision | None = None
        self.done = False
        self.tr_playing = False
        self.flow: Flow | None = None
        self.owns_job = False


class _VtsJob:
    """One edge transcode; coalesced requests for the same output ride along."""

    __slots__ = ("output_ref", "duration", "entries")

    def __init__(self, output_ref, duration, rec, enqueue_t):
        self.output_ref = output_ref
        self.duration = duration
        self.entries: list = [(rec, enqueue_t)]


@dataclass
class RunResult:
    summary: MetricsSummary
    records: list[RequestRecord]
    trace_hash: str
    issued_count: int
    served_count: int
    failed_count: int
    max_link_utilization: float = 0.0


class _Engine:
    def __init__(self, sc: ScenarioConfig):
        sc.validate()
        self.sc = sc
        self.rng = random.Random(sc.seed)
        self.ladder = sc.ladder()
        self.catalog = sc.catalog()
        self.tables = CostTables(
            edge_power_watts=sc.edge_power_watts, edge_speed_factor=sc.edge_speed_factor
        )
        self.ctx = DecisionContext(
            ladder=self.ladder,
            segment_duration_s=sc.segment_duration_s,
            tables=self.tables,
            battery_floor_pct=sc.battery_floor_pct,
            battery_budget_pct=sc.battery_budget_pct,
            selection_mode=sc.selection_mode,
        )
        self.bola_params = abr_mod.BolaParams(sc.bola_control_gain, sc.bola_rebuffer_utility)
        self.rung_bytes = [segment_bytes(rep, sc.segment_duration_s) for rep in self.ladder]

        self.topology = Topology.build(sc)
        dataset = sc.dataset_segments()
        self.vts_cache = LruCache(max(1, int(sc.vts_capacity_fraction * dataset)))
        self.cdn_caches = [
            LruCache(max(1, int(sc.cdn_capacity_fraction * dataset)))
            for _ in range(sc.cdn_count)
        ]
        self.vts_slots_free = sc.vts_transcode_slots
        self.vts_queue: list[_VtsJob] = []
        # The tracker never runs two identical transcodes concurrently;
        # requests for an output already being produced ride the same job.
        self.inflight_jobs: dict[SegmentRef, _VtsJob] = {}

        self.registry = Registry()
        self.registry.origin = NodeView(
            ORIGIN_ID, NodeKind.ORIGIN, available_bps=sc.link_origin_bps
        )
        for i in range(sc.cdn_count):
            self.registry.cdns[i] = NodeView(i, NodeKind.CDN, available_bps=sc.link_cdn_bps)

        self.peers: dict[int, _Peer] = {}
        self.heap: list = []
        self._seq = 0
        self.now = 0.0
        self.records: list[RequestRecord] = []
        self.issued_count = 0
        self.failed_count = 0
        self.max_link_utilization = 0.0
        self._join_ordinal = 0

        for t, kind, pid in churn_schedule(self.rng, sc):
            self._push(t, EV_JOIN if kind == "join" else EV_LEAVE, pid)
        if sc.duration_s > 0:
            self._push(0.0, EV_PRODUCE, 0)
            if sc.monitoring_interval_s <= sc.duration_s:
                self._push(sc.monitoring_interval_s, EV_TICK, None)

    # -- event plumbing ------------------------------------------------------

    def _push(self, t: float, kind: int, a, b=None) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (t, self._seq, kind, a, b))

    def run(self) -> RunResult:
        handlers = {
            EV_PRODUCE: self._on_produce,
            EV_JOIN: self._on_join,
            EV_LEAVE: self._on_leave,
            EV_TICK: self._on_tick,
            EV_REQUEST: self._on_request_event,
            EV_FLOW_DONE: self._on_flow_done,
            EV_TR_DONE: self._on_transcode_done,
        }
        while self.heap:
            t, _, kind, a, b = heapq.heappop(self.heap)
            assert t >= self.now - 1e-9, "event time went backwards"
            self.now = t
            handlers[kind](t, a, b)
        summary = summarize(
            self.records,
            self.tables,
            self.ladder,
            self.sc.segment_duration_s,
            self.sc.qoe_switch_weight,
            self.sc.qoe_stall_weight,
            failed_count=self.failed_count,
        )
        digest = hashlib.sha256()
        digest.update(RequestRecord.CSV_HEADER.encode())
        for r in self.records:
            digest.update(b"\n")
            digest.update(r.csv_row().encode())
        digest.update(f"\nfailed={self.failed_count}".encode())
        return RunResult(
            summary=summary,
            records=self.records,
            trace_hash=digest.hexdigest(),
            issued_count=self.issued_count,
            served_count=len(self.records),
            failed_count=self.failed_count,
            max_link_utilization=self.max_link_utilization,
        )

    # -- fluid network ---------------------------------------------------------

    def _flow_start(self, links, nbytes, cb, rec=None, src_peer=None) -> Flow:
        flow = Flow(links, nbytes, cb, self.now, rec, src_peer)
        if rec is not None:
            rec.flow = flow
        for link in links:
            link.flows[flow] = None
        self._retime(links)
        return flow

    def _flow_remove(self, flow: Flow) -> None:
        flow.alive = False
        if flow.rec is not None and flow.rec.flow is flow:
            flow.rec.flow = None
        for link in flow.links:
            link.flows.pop(flow, None)
        self._retime(flow.links)
        if flow.src_peer is not None:
            self._release_upload(flow.src_peer)

    def _retime(self, changed_links) -> None:
        now = self.now
        affected: dict[Flow, None] = {}
        for link in changed_links:
            affected.update(link.flows)
        for flow in affected:
            links = flow.links
            if len(links) == 1:
                link = links[0]
                rate = link.capacity_bps / len(link.flows)
            else:
                first, second = links
                rate = first.capacity_bps / len(first.flows)
                other = second.capacity_bps / len(second.flows)
                if other < rate:
                    rate = other
            if rate != flow.rate:
                flow.bits_left = max(0.0, flow.bits_left - flow.rate * (now - flow.last_t))
                flow.last_t = now
                flow.rate = rate
                flow.epoch += 1
                self._push(now + flow.bits_left / rate, EV_FLOW_DONE, flow, flow.epoch)
        if self.sc.debug_checks:
            for link in changed_links:
                if link.flows:
                    total = sum(f.rate for f in link.flows)
                    self.max_link_utilization = max(
                        self.max_link_utilization, total / link.capacity_bps
                    )

    def _on_flow_done(self, t, flow: Flow, epoch) -> None:
        if not flow.alive or epoch != flow.epoch:
            return
        flow.bits_left = 0.0
        self._flow_remove(flow)
        flow.cb(t, flow)

    def _release_upload(self, peer: _Peer) -> None:
        peer.uploads -= 1
        if not peer.alive:
            return
        while peer.upload_q and peer.uploads < self.sc.peer_upload_slots:
            rec, start_fn = peer.upload_q.pop(0)
            if rec.done:
                continue
            start_fn(self.now)
            break

    # -- time arithmetic ---------------------------------------------------------

    def _newest_index(self, now: float) -> int:
        return int(min(now, self.sc.duration_s) / self.sc.segment_duration_s + 1e-9)

    def _min_live_index(self, now: float) -> int:
        return max(0, self._newest_index(now) - self.sc.live_window_segments + 1)

    # -- production, placement, pruning -------------------------------------------

    def _on_produce(self, t, k, _b) -> None:
        sc = self.sc
        fill = sc.cdn_capacity_fraction
        nrungs = len(self.ladder)
        for cache in self.cdn_caches:
            for channel in range(sc.channel_count):
                for rung in range(nrungs):
                    if self.rng.random() < fill:
                        cache.insert(SegmentRef(channel, k, rung))
        min_live = k - sc.live_window_segments + 1
        if min_live > 0:
            self.vts_cache.prune_older_than(min_live)
            for cache in self.cdn_caches:
                cache.prune_older_than(min_live)
            for peer in self.peers.values():
                if peer.alive:
                    peer.cache.prune_older_than(min_live)
        next_t = (k + 1) * sc.segment_duration_s
        if next_t <= sc.duration_s:
            self._push(next_t, EV_PRODUCE, k + 1)

    # -- membership ------------------------------------------------------------------

    def _on_join(self, t, pid, _b) -> None:
        sc = self.sc
        device = DeviceClass.MOBILE if self.rng.random() < sc.mobile_fraction else DeviceClass.PC
        battery = self.rng.uniform(sc.battery_init_min_pct, sc.battery_init_max_pct)
        channel = sample_channel(self.rng, self.catalog)
        group = self._join_ordinal % sc.group_count
        self._join_ordinal += 1
        peer = _Peer(
            pid, group, device, t, battery, channel,
            sc.peer_cache_segments, sc.peer_up_bps, sc.peer_down_bps,
        )
        peer.live_delay = self.rng.randint(sc.live_delay_min_segments, sc.live_delay_segments)
        peer.next_index = max(0, self._newest_index(t) - peer.live_delay)
        self.peers[pid] = peer
        self._recompute_roles(group)
        self._report_peer(peer, t)
        self._push(t, EV_REQUEST, pid, peer.request_token)

    def _recompute_roles(self, group: int) -> None:
        members = [p for p in self.peers.values() if p.alive and p.group == group]
        if not members:
            return
        members.sort(key=lambda p: (p.join_t, p.pid))
        n_seed = max(1, math.ceil(self.sc.seeder_fraction * len(members)))
        for i, peer in enumerate(members):
            role = PeerRole.SEEDER if i < n_seed else PeerRole.LEECHER
            peer.role = role
            view = self.registry.peers.get(peer.pid)
            if view is not None:
                view.role = role

    def _on_leave(self, t, pid, _b) -> None:
        peer = self.peers.get(pid)
        if peer is None or not peer.alive:
            return
        peer.alive = False
        peer.request_token += 1
        self.registry.remove_peer(pid)
        if peer.pending is not None and not peer.pending.done:
            self._fail_request(peer.pending)
        peer.pending = None
        for rec, _fn in peer.upload_q:
            if not rec.done:
                self._fail_stage(rec, t)
        peer.upload_q.clear()
        for rec, _enq in peer.tr_q:
            if not rec.done:
                self._fail_stage(rec, t)
        peer.tr_q.clear()
        for flow in list(peer.up_link.flows):
            rec = flow.rec
            self._flow_remove(flow)
            if rec is not None and not rec.done:
                self._fail_stage(rec, t)
        for flow in list(peer.down_link.flows):
            rec = flow.rec
            self._flow_remove(flow)
            if rec is not None and not rec.done:
                self._fail_request(rec)
        self._recompute_roles(peer.group)

    # -- reporting ----------------------------------------------------------------------

    def _report_peer(self, peer: _Peer, now: float) -> None:
        report = CmcdReport(
            peer_id=peer.pid,
            role=peer.role,
            join_time_s=peer.join_t,
            battery_pct=int(peer.battery),
            device=peer.device,
            playing=peer.playing_at(now),
            cached=tuple(peer.cache.refs()),
            last_mile_bps=int(peer.up_link.share_for_new_flow()),
        )
        apply_report(self.registry, report, now)
        view = self.registry.peers[peer.pid]
        view.group = peer.group
        view.down_bps = peer.down_link.share_for_new_flow()
        view.transcode_spent_battery_pct = peer.spent_pct
        view.role = peer.role

    def _on_tick(self, t, _a, _b) -> None:
        for peer in self.peers.values():
            if peer.alive:
                self._report_peer(peer, t)
        for i, cache in enumerate(self.cdn_caches):
            snap = cache.occupancy_snapshot()
            apply_report(
                self.registry, CmsdReport(i, snap.entries, round(snap.fill_ratio, 3)), t
            )
            self.registry.cdns[i].available_bps = self.topology.cdn_links[i].share_for_new_flow()
        self.registry.origin.available_bps = self.topology.origin_link.share_for_new_flow()
        next_t = t + self.sc.monitoring_interval_s
        if next_t <= self.sc.duration_s:
            self._push(next_t, EV_TICK, None)

    def _vts_view(self) -> NodeView:
        return NodeView(
            VTS_ID,
            NodeKind.VTS,
            cached=self.vts_cache.refs(),
            transcode_slots_free=self.vts_slots_free,
            transcode_queue_len=len(self.vts_queue),
        )

    # -- player ---------------------------------------------------------------------------

    def _update_player(self, peer: _Peer, now: float) -> None:
        if peer.started:
            dt = now - peer.buffer_t
            if dt > 0:
                if peer.player.buffer_s >= dt:
                    peer.player.buffer_s -= dt
                else:
                    peer.unattributed_stall += dt - peer.player.buffer_s
                    peer.player.buffer_s = 0.0
        peer.buffer_t = now

    # -- request lifecycle -----------------------------------------------------------------

    def _on_request_event(self, t, pid, token) -> None:
        peer = self.peers.get(pid)
        if peer is None or not peer.alive or token != peer.request_token:
            return
        if peer.pending is not None:
            return
        self._issue_request(peer, t)

    def _issue_request(self, peer: _Peer, now: float) -> None:
        sc = self.sc
        if now >= sc.duration_s:
            return
        min_live = self._min_live_index(now)
        newest = self._newest_index(now)
        if peer.next_index < min_live:
            target = max(min_live, newest - peer.live_delay)
            peer.unattributed_stall += (target - peer.next_index) * sc.segment_duration_s
            peer.next_index = target
        if peer.next_index > newest:
            avail_t = peer.next_index * sc.segment_duration_s
            if avail_t < sc.duration_s:
                self._push(avail_t, EV_REQUEST, peer.pid, peer.request_token)
            return
        self._update_player(peer, now)
        if sc.abr == "bola":
            rung = abr_mod.bola_choose(
                peer.player, self.ladder, self.bola_params, sc.segment_duration_s
            )
        else:
            rung = abr_mod.hybrid_choose(
                peer.player, self.ladder, sc.abr_safety, sc.segment_duration_s,
                self.bola_params,
            )
        peer.player.last_rung = rung
        rec = _Request(peer.pid, SegmentRef(peer.channel, peer.next_index, rung), now)
        peer.pending = rec
        self.issued_count += 1
        self._execute_plan(rec, now)

    def _execute_plan(self, rec: _Request, now: float) -> None:
        peer = self.peers.get(rec.pid)
        if peer is None or not peer.alive:
            self._fail_request(rec)
            return
        requester_view = self.registry.peers.get(rec.pid)
        if requester_view is None:
            self._fail_request(rec)
            return
        self.registry.vts = self._vts_view()
        try:
            rec.decision = decide(
                rec.ref,
                requester_view,
                self.registry,
                self.sc.policy,
                self.ctx,
                frozenset(rec.failed_actions),
            )
        except UnreachableSourceError:
            self._fail_request(rec)
            return
        rec.attempts += 1
        self._execute_stage(rec, now)

    def _execute_stage(self, rec: _Request, now: float) -> None:
        d = rec.decision
        action = d.action
        ref = rec.ref
        req_bytes = self.rung_bytes[ref.rung_index]

        if action in (Action.P2P_FETCH, Action.P2P_TRANSCODE):
            src = self.peers.get(d.source_id)
            if src is None or not src.alive:
                self._fail_stage(rec, now)
                return
            if action == Action.P2P_FETCH:
                if not src.cache.lookup(ref):
                    self._fail_stage(rec, now)
                    return
                self._start_upload(src, rec, req_bytes, now)
            else:
                src_ref = SegmentRef(ref.channel_id, ref.segment_index, d.transcode_source_rung)
                if not src.cache.lookup(src_ref):
                    self._fail_stage(rec, now)
                    return
                self._peer_transcode_enqueue(src, rec, now)
        elif action == Action.VTS_FETCH:
            if not self.vts_cache.lookup(ref):
                self._fail_stage(rec, now)
                return
            self._start_delivery(rec, now)
        elif action == Action.VTS_TRANSCODE:
            src_ref = SegmentRef(ref.channel_id, ref.segment_index, d.transcode_source_rung)
            if not self.vts_cache.lookup(src_ref):
                self._fail_stage(rec, now)
                return
            self._vts_transcode_enqueue(rec, now)
        elif action in (Action.CDN_FETCH, Action.CDN_FETCH_VTS_TRANSCODE):
            cache = self.cdn_caches[d.source_id]
            fetch_rung = (
                ref.rung_index if action == Action.CDN_FETCH else d.transcode_source_rung
            )
            fetch_ref = SegmentRef(ref.channel_id, ref.segment_index, fetch_rung)
            if not cache.lookup(fetch_ref):
                self._fail_stage(rec, now)
                return
            self._start_ingress(rec, self.topology.cdn_links[d.source_id], fetch_ref)
        else:  # ORIGIN_FETCH
            if not (
                self._min_live_index(now) <= ref.segment_index <= self._newest_index(now)
            ):
                self._fail_stage(rec, now)
                return
            self._start_ingress(rec, self.topology.origin_link, ref)

    def _start_upload(self, src: _Peer, rec: _Request, nbytes: int, now: float) -> None:
        def start(_t: float) -> None:
            requester = self.peers.get(rec.pid)
            if requester is None or not requester.alive:
                if not rec.done:
                    self._fail_request(rec)
                return
            src.uploads += 1
            self._flow_start(
                (src.up_link, requester.down_link), nbytes, self._p2p_done,
                rec=rec, src_peer=src,
            )

        if src.uploads >= self.sc.peer_upload_slots:
            src.upload_q.append((rec, start))
        else:
            start(now)

    def _p2p_done(self, t: float, flow: Flow) -> None:
        rec = flow.rec
        if rec is None or rec.done:
            return
        rec.trans_s += t - flow.start_t
        self._deliver(rec, t)

    def _after_ingress(self, rec: _Request, t: float) -> None:
        if rec.done:
            return
        if rec.decision.action == Action.CDN_FETCH_VTS_TRANSCODE:
            self._vts_transcode_enqueue(rec, t)
        else:
            self._start_delivery(rec, t)

    def _start_ingress(self, rec: _Request, link: Link, fetch_ref: SegmentRef) -> None:
        def done(t: float, flow: Flow) -> None:
            if rec.done:
                return
            rec.trans_s += t - flow.start_t
            self.vts_cache.insert(fetch_ref)
            self._after_ingress(rec, t)

        self._flow_start((link,), self.rung_bytes[fetch_ref.rung_index], done, rec=rec)

    def _start_delivery(self, rec: _Request, now: float) -> None:
        requester = self.peers.get(rec.pid)
        if requester is None or not requester.alive:
            if not rec.done:
                self._fail_request(rec)
            return

        def done(t: float, flow: Flow) -> None:
            if rec.done:
                return
            rec.trans_s += t - flow.start_t
            self._deliver(rec, t)

        self._flow_start(
            (requester.down_link,), self.rung_bytes[rec.ref.rung_index], done, rec=rec
        )

    # -- transcoding -----------------------------------------------------------------------

    def _vts_transcode_enqueue(self, rec: _Request, now: float) -> None:
        output_ref = rec.ref
        running = self.inflight_jobs.get(output_ref)
        if running is not None:
            running.entries.append((rec, now))
            return
        duration = self.tables.transcode_time_per_segment(
            self.ladder[rec.decision.transcode_source_rung],
            self.ladder[rec.ref.rung_index],
            DeviceClass.EDGE,
        )
        job = _VtsJob(output_ref, duration, rec, now)
        self.inflight_jobs[output_ref] = job
        if self.vts_slots_free > 0:
            self._vts_begin(job, now)
        else:
            self.vts_queue.append(job)

    def _vts_begin(self, job: _VtsJob, now: float) -> None:
        self.vts_slots_free -= 1
        self._push(now + job.duration, EV_TR_DONE, "vts", job)

    def _peer_transcode_enqueue(self, src: _Peer, rec: _Request, now: float) -> None:
        if src.tr_busy:
            src.tr_q.append((rec, now))
        else:
            self._peer_begin(src, rec, now, now)

    def _peer_begin(self, src: _Peer, rec: _Request, enqueue_t: float, now: float) -> None:
        src.tr_busy = True
        rec.comp_s += now - enqueue_t
        duration = self.tables.transcode_time_per_segment(
            self.ladder[rec.decision.transcode_source_rung],
            self.ladder[rec.ref.rung_index],
            src.device,
        )
        self._push(now + duration, EV_TR_DONE, "peer", (src, rec, duration))

    def _on_transcode_done(self, t, site, payload) -> None:
        if site == "vts":
            job: _VtsJob = payload
            self.vts_slots_free += 1
            while self.vts_queue and self.vts_slots_free > 0:
                nxt = self.vts_queue.pop(0)
                if all(rec.done for rec, _ in nxt.entries):
                    self.inflight_jobs.pop(nxt.output_ref, None)
                    continue
                self._vts_begin(nxt, t)
                break
            self.inflight_jobs.pop(job.output_ref, None)
            self.vts_cache.insert(job.output_ref)
            owner_assigned = False
            for rec, enqueue_t in job.entries:
                if rec.done:
                    continue
                if not owner_assigned:
                    rec.owns_job = True
                    owner_assigned = True
                rec.comp_s += t - enqueue_t
                self._start_delivery(rec, t)
            return
        src, rec, duration = payload
        src.tr_busy = False
        if src.alive:
            playing = src.playing_at(t)
            kwh, pct = self.tables.peer_transcode_battery_per_segment(
                self.ladder[rec.decision.transcode_source_rung],
                self.ladder[rec.ref.rung_index],
                playing=playing,
            )
            src.battery = max(0.0, src.battery - pct)
            src.spent_pct += pct
            view = self.registry.peers.get(src.pid)
            if view is not None:
                view.transcode_spent_battery_pct = src.spent_pct
            while src.tr_q:
                rec2, enq = src.tr_q.pop(0)
                if rec2.done:
                    continue
                self._peer_begin(src, rec2, enq, t)
                break
            if not rec.done:
                rec.tr_playing = playing
                rec.owns_job = True
                rec.comp_s += duration
                self._start_upload(src, rec, self.rung_bytes[rec.ref.rung_index], t)
        elif not rec.done:
            self._fail_stage(rec, t)

    # -- terminal states ------------------------------------------------------------------------

    def _fail_stage(self, rec: _Request, now: float) -> None:
        if rec.done:
            return
        rec.failed_actions.add(rec.decision.action)
        self._execute_plan(rec, now)

    def _fail_request(self, rec: _Request) -> None:
        if rec.done:
            return
        rec.done = True
        if rec.flow is not None and rec.flow.alive:
            self._flow_remove(rec.flow)
        self.failed_count += 1
        peer = self.peers.get(rec.pid)
        if peer is not None and peer.pending is rec:
            peer.pending = None

    def _deliver(self, rec: _Request, now: float) -> None:
        rec.done = True
        peer = self.peers.get(rec.pid)
        if peer is None or not peer.alive:
            self.failed_count += 1
            return
        sc = self.sc
        d = rec.decision
        self._update_player(peer, now)
        peer.cache.insert(rec.ref)
        peer.player.buffer_s += sc.segment_duration_s
        if not peer.started and peer.player.buffer_s >= (
            min(peer.live_delay, sc.buffer_cap_segments) * sc.segment_duration_s - 1e-9
        ):
            peer.started = True
            peer.buffer_t = now
        latency = now - rec.issue_t
        nbytes = self.rung_bytes[rec.ref.rung_index]
        if latency > 0:
            peer.player.record_download(nbytes * 8.0 / latency)
        if d.action == Action.P2P_TRANSCODE:
            src_peer = self.peers.get(d.source_id)
            device = src_peer.device if src_peer is not None else DeviceClass.PC
            device_str = device.value
        elif d.action in (Action.VTS_TRANSCODE, Action.CDN_FETCH_VTS_TRANSCODE):
            device = DeviceClass.EDGE
            device_str = DeviceClass.EDGE.value
        else:
            device = None
            device_str = None
        vmaf = delivered_vmaf_of(d, rec.ref, self.ladder, self.tables, sc.reference_vmaf, device)
        stall = peer.unattributed_stall
        peer.unattributed_stall = 0.0
        self.records.append(
            RequestRecord(
                issue_time_s=rec.issue_t,
                client_id=rec.pid,
                channel_id=rec.ref.channel_id,
                segment_index=rec.ref.segment_index,
                rung_index=rec.ref.rung_index,
                action=int(d.action),
                source_kind=d.source_kind.value,
                source_id=d.source_id,
                transcode_source_rung=d.transcode_source_rung,
                transcode_device=device_str,
                transcode_while_playing=rec.tr_playing,
                transmission_s=rec.trans_s,
                computation_s=rec.comp_s,
                serving_latency_s=latency,
                delivered_vmaf=vmaf,
                stall_contribution_s=stall,
                attempts=rec.attempts,
                owns_transcode_job=rec.owns_job,
            )
        )
        peer.pending = None
        peer.next_index += 1
        room_wait = max(
            0.0,
            peer.player.buffer_s - (sc.buffer_cap_segments - 1) * sc.segment_duration_s,
        )
        self._push(now + room_wait, EV_REQUEST, peer.pid, peer.request_token)


def run(scenario: ScenarioConfig) -> RunResult:
    """Execute one scenario; deterministic for a given seed."""
    return _Engine(scenario).run()
