"""Action-tree serving decisions over a registry snapshot.

Seven ways to serve a segment request, numbered as in the action tree:

    1  fetch from the most stable adjacent peer caching the exact rung
    2  transcode from a higher rung at the most stable capable adjacent peer
    3  fetch from the tracker's own cache
    4  transcode from a higher rung cached at the tracker
    5  fetch a higher rung from the best CDN and transcode at the tracker
    6  fetch the exact rung from the best CDN
    7  fetch from the origin server (always feasible inside the live window)

The tree figure leaves the traversal rule open; this engine filters by
feasibility, estimates serving time per action, and takes the minimum with
lower action numbers breaking ties. A strict-priority mode (lowest feasible
action number wins) is available for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Sequence

from .costs import CostTables, DeviceClass, UnreachableSourceError, transmission_time
from .media import Representation, SegmentRef, segment_bytes
from .registry import NodeKind, NodeView, PeerRole, Registry


class Action(IntEnum):
    P2P_FETCH = 1
    P2P_TRANSCODE = 2
    VTS_FETCH = 3
    VTS_TRANSCODE = 4
    CDN_FETCH_VTS_TRANSCODE = 5
    CDN_FETCH = 6
    ORIGIN_FETCH = 7


POLICY_ACTIONS: dict[str, frozenset[Action]] = {
    # Full action tree.
    "FULL": frozenset(Action),
    # Plain CDN streaming, no P2P support.
    "NOH": frozenset({Action.CDN_FETCH, Action.ORIGIN_FETCH}),
    # Basic tracker without caching or transcoding.
    "SEH": frozenset({Action.P2P_FETCH, Action.CDN_FETCH, Action.ORIGIN_FETCH}),
    # Edge caching but no transcoding anywhere.
    "NTH": frozenset(
        {Action.P2P_FETCH, Action.VTS_FETCH, Action.CDN_FETCH, Action.ORIGIN_FETCH}
    ),
    # Edge caching/transcoding but no peer-side transcoding.
    "ECT": frozenset(set(Action) - {Action.P2P_TRANSCODE}),
}

POLICY_NAMES = tuple(POLICY_ACTIONS)


class Decision(NamedTuple):
    """A serving plan candidate with its estimated time breakdown."""

    action: Action
    source_kind: NodeKind
    source_id: int
    transcode_source_rung: int | None = None
    est_transmission_s: float = 0.0
    est_computation_s: float = 0.0

    @property
    def est_total_s(self) -> float:
        return self.est_transmission_s + self.est_computation_s


@dataclass(frozen=True)
class DecisionContext:
    """Everything decide() needs besides the registry snapshot."""

    ladder: Sequence[Representation]
    segment_duration_s: float
    tables: CostTables
    battery_floor_pct: float = 20.0
    battery_budget_pct: float = 2.0
    selection_mode: str = "cost"  # "cost" | "priority"

    def rung_bytes(self, rung: int) -> int:
        return segment_bytes(self.ladder[rung], self.segment_duration_s)


def _lowest_cached_rung_above(
    view: NodeView, request: SegmentRef, ladder_len: int
) -> int | None:
    best = None
    cached = view.cached
    if len(cached) <= ladder_len:
        for ref in cached:
            if (
                ref.channel_id == request.channel_id
                and ref.segment_index == request.segment_index
                and ref.rung_index > request.rung_index
                and (best is None or ref.rung_index < best)
            ):
                best = ref.rung_index
    else:
        for rung in range(request.rung_index + 1, ladder_len):
            if SegmentRef(request.channel_id, request.segment_index, rung) in cached:
                return rung
    return best


def feasible_candidates(
    request: SegmentRef,
    requester: NodeView,
    registry: Registry,
    ctx: DecisionContext,
    excluded_actions: frozenset[Action] = frozenset(),
) -> list[Decision]:
    """At most one unestimated candidate per feasible action."""
    candidates: list[Decision] = []
    nrungs = len(ctx.ladder)

    want_fetch = Action.P2P_FETCH not in excluded_actions
    want_transcode = Action.P2P_TRANSCODE not in excluded_actions
    if want_fetch or want_transcode:
        # Single stability-minimizing pass over the requester's group.
        group = requester.group
        self_id = requester.node_id
        seeder_requester = requester.role == PeerRole.SEEDER
        channel, index, req_rung = request
        floor = ctx.battery_floor_pct
        budget = ctx.battery_budget_pct
        best_fetch: tuple | None = None
        best_transcode: tuple | None = None
        for p in registry.peers.values():
            if p.group != group or p.node_id == self_id:
                continue
            if seeder_requester and p.role == PeerRole.LEECHER:
                continue
            cached = p.cached
            if want_fetch and request in cached:
                key = (p.join_time_s, p.node_id)
                if best_fetch is None or key < best_fetch:
                    best_fetch = key
            if (
                want_transcode
                and p.battery_pct > floor
                and p.transcode_spent_battery_pct < budget
                and p.device is not None
            ):
                low = None
                for ref in cached:
                    if (
                        ref[0] == channel
                        and ref[1] == index
                        and ref[2] > req_rung
                        and (low is None or ref[2] < low)
                    ):
                        low = ref[2]
                if low is not None:
                    key = (p.join_time_s, p.node_id, low)
                    if best_transcode is None or key[:2] < best_transcode[:2]:
                        best_transcode = key
        if best_fetch is not None:
            candidates.append(Decision(Action.P2P_FETCH, NodeKind.PEER, best_fetch[1]))
        if best_transcode is not None:
            candidates.append(
                Decision(
                    Action.P2P_TRANSCODE, NodeKind.PEER, best_transcode[1], best_transcode[2]
                )
            )

    vts = registry.vts
    if vts is not None:
        if Action.VTS_FETCH not in excluded_actions and request in vts.cached:
            candidates.append(Decision(Action.VTS_FETCH, NodeKind.VTS, vts.node_id))
        if Action.VTS_TRANSCODE not in excluded_actions:
            rung = _lowest_cached_rung_above(vts, request, nrungs)
            if rung is not None:
                candidates.append(
                    Decision(Action.VTS_TRANSCODE, NodeKind.VTS, vts.node_id, rung)
                )

    if Action.CDN_FETCH_VTS_TRANSCODE not in excluded_actions:
        with_higher = []
        for c in registry.cdns.values():
            rung = _lowest_cached_rung_above(c, request, nrungs)
            if rung is not None:
                with_higher.append((c, rung))
        if with_higher:
            src, rung = max(with_higher, key=lambda cr: (cr[0].available_bps, -cr[0].node_id))
            candidates.append(
                Decision(Action.CDN_FETCH_VTS_TRANSCODE, NodeKind.CDN, src.node_id, rung)
            )

    if Action.CDN_FETCH not in excluded_actions:
        exact = [c for c in registry.cdns.values() if request in c.cached]
        if exact:
            src = max(exact, key=lambda c: (c.available_bps, -c.node_id))
            candidates.append(Decision(Action.CDN_FETCH, NodeKind.CDN, src.node_id))

    if Action.ORIGIN_FETCH not in excluded_actions and registry.origin is not None:
        candidates.append(
            Decision(Action.ORIGIN_FETCH, NodeKind.ORIGIN, registry.origin.node_id)
        )

    return candidates


def _vts_queue_wait(vts: NodeView, tables: CostTables) -> float:
    if vts.transcode_slots_free > 0:
        return 0.0
    return vts.transcode_queue_len * tables.mean_edge_job_time_s


def estimate_serving_time(
    candidate: Decision,
    request: SegmentRef,
    requester: NodeView,
    registry: Registry,
    ctx: DecisionContext,
) -> Decision:
    """Fill in transmission/computation estimates for one candidate.

    Transmission sums hop times along the data path at current equal-share
    bandwidth; computation is the per-segment transcode time at the executing
    device plus the tracker's queue wait for tracker-side transcodes.
    """
    tables = ctx.tables
    ladder = ctx.ladder
    req_bytes = ctx.rung_bytes(request.rung_index)
    action = candidate.action
    src_rung = candidate.transcode_source_rung
    trans = 0.0
    comp = 0.0

    if action in (Action.P2P_FETCH, Action.P2P_TRANSCODE):
        peer = registry.peers[candidate.source_id]
        trans = transmission_time(req_bytes, peer.available_bps)
        if action == Action.P2P_TRANSCODE:
            comp = tables.transcode_time_per_segment(
                ladder[src_rung], ladder[request.rung_index], peer.device
            )
    elif action in (Action.VTS_FETCH, Action.VTS_TRANSCODE):
        trans = transmission_time(req_bytes, requester.down_bps)
        if action == Action.VTS_TRANSCODE:
            comp = tables.transcode_time_per_segment(
                ladder[src_rung], ladder[request.rung_index], DeviceClass.EDGE
            ) + _vts_queue_wait(registry.vts, tables)
    elif action == Action.CDN_FETCH_VTS_TRANSCODE:
        cdn = registry.cdns[candidate.source_id]
        trans = transmission_time(
            ctx.rung_bytes(src_rung), cdn.available_bps
        ) + transmission_time(req_bytes, requester.down_bps)
        comp = tables.transcode_time_per_segment(
            ladder[src_rung], ladder[request.rung_index], DeviceClass.EDGE
        ) + _vts_queue_wait(registry.vts, tables)
    elif action == Action.CDN_FETCH:
        cdn = registry.cdns[candidate.source_id]
        trans = transmission_time(req_bytes, cdn.available_bps) + transmission_time(
            req_bytes, requester.down_bps
        )
    elif action == Action.ORIGIN_FETCH:
        trans = transmission_time(req_bytes, registry.origin.available_bps) + (
            transmission_time(req_bytes, requester.down_bps)
        )

    return Decision(
        action=action,
        source_kind=candidate.source_kind,
        source_id=candidate.source_id,
        transcode_source_rung=src_rung,
        est_transmission_s=trans,
        est_computation_s=comp,
    )


def decide(
    request: SegmentRef,
    requester: NodeView,
    registry: Registry,
    policy: str,
    ctx: DecisionContext,
    excluded_actions: frozenset[Action] = frozenset(),
) -> Decision:
    """Pick the serving plan with minimum estimated serving time.

    Only actions in the policy subset compete; ties go to the lower action
    number. Origin fetch is in every subset, so a decision always exists.
    """
    allowed = POLICY_ACTIONS[policy]
    estimated: list[Decision] = []
    for cand in feasible_candidates(request, requester, registry, ctx, excluded_actions):
        if cand.action not in allowed:
            continue
        try:
            estimated.append(
                estimate_serving_time(cand, request, requester, registry, ctx)
            )
        except UnreachableSourceError:
            if cand.action == Action.ORIGIN_FETCH:
                raise
    if not estimated:
        raise UnreachableSourceError("no reachable serving plan for request")
    if ctx.selection_mode == "priority":
        return min(estimated, key=lambda d: d.action)
    return min(estimated, key=lambda d: (d.est_total_s, d.action))


def on_failure_redecide(
    request: SegmentRef,
    requester: NodeView,
    registry: Registry,
    policy: str,
    ctx: DecisionContext,
    failed_actions: frozenset[Action],
) -> Decision:
    """Re-decide after an execution failure, never retrying a failed action.

    Excluding whole action tags bounds the retry chain at one re-decision per
    action; origin fetch cannot fail, so the chain always terminates.
    """
    return decide(request, requester, registry, policy, ctx, failed_actions)
