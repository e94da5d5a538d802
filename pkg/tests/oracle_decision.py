"""Independent brute-force re-derivation of the serving decision.

Used by the decision tests and the acceptance suite. Deliberately written
from scratch against the cost rules: full enumeration per action over all
sources, straight-line arithmetic, explicit sort-based selection. Only raw
table rows are shared with the implementation.
"""

import math
import random

from hybridstream.costs import TRANSCODE_ROWS, DeviceClass
from hybridstream.decision import POLICY_ACTIONS
from hybridstream.media import SegmentRef, default_ladder
from hybridstream.registry import NodeKind, NodeView, PeerRole, Registry

LADDER = default_ladder()
SEG_S = 2.0
TIME_PER_SEGMENT = {
    (s * 1000, t * 1000, d): total / 90.0 for s, t, d, total, _ in TRANSCODE_ROWS
}
MEAN_EDGE_JOB_S = sum(
    total / 90.0 for _, _, d, total, _ in TRANSCODE_ROWS if d == "pc"
) / 10.0


def seg_bytes(rung):
    return round(LADDER[rung].bitrate_bps * SEG_S / 8.0)


def tx(rung, bps):
    return seg_bytes(rung) * 8.0 / bps


def device_time(src_rung, dst_rung, device):
    key = (LADDER[src_rung].bitrate_bps, LADDER[dst_rung].bitrate_bps, device)
    return TIME_PER_SEGMENT[key]


def lowest_higher(cached, request):
    rungs = sorted(
        ref.rung_index
        for ref in cached
        if ref.channel_id == request.channel_id
        and ref.segment_index == request.segment_index
        and ref.rung_index > request.rung_index
    )
    return rungs[0] if rungs else None


def oracle_decide(request, requester, registry, policy,
                  battery_floor=20.0, battery_budget=2.0, excluded=frozenset()):
    """Returns (action, source_kind, source_id, src_rung, total) or None."""
    allowed = POLICY_ACTIONS[policy] - set(excluded)
    adjacent = sorted(
        (
            p
            for p in registry.peers.values()
            if p.group == requester.group
            and p.node_id != requester.node_id
            and not (requester.role == PeerRole.SEEDER and p.role == PeerRole.LEECHER)
        ),
        key=lambda p: (p.join_time_s, p.node_id),
    )
    candidates = []

    if 1 in allowed:
        holders = [p for p in adjacent if request in p.cached]
        if holders:
            src = holders[0]
            if src.available_bps > 0:
                total = tx(request.rung_index, src.available_bps) + 0.0
                candidates.append((total, 1, NodeKind.PEER, src.node_id, None))

    if 2 in allowed:
        capable = [
            (p, lowest_higher(p.cached, request))
            for p in adjacent
            if p.battery_pct > battery_floor
            and p.transcode_spent_battery_pct < battery_budget
            and p.device is not None
        ]
        capable = [(p, r) for p, r in capable if r is not None]
        if capable:
            src, rung = capable[0]
            if src.available_bps > 0:
                trans = tx(request.rung_index, src.available_bps)
                comp = device_time(rung, request.rung_index, src.device.value)
                candidates.append((trans + comp, 2, NodeKind.PEER, src.node_id, rung))

    vts = registry.vts
    down = requester.down_bps
    if vts is not None and down > 0:
        wait = 0.0 if vts.transcode_slots_free > 0 else vts.transcode_queue_len * MEAN_EDGE_JOB_S
        if 3 in allowed and request in vts.cached:
            candidates.append((tx(request.rung_index, down) + 0.0, 3, NodeKind.VTS, vts.node_id, None))
        if 4 in allowed:
            rung = lowest_higher(vts.cached, request)
            if rung is not None:
                trans = tx(request.rung_index, down)
                comp = device_time(rung, request.rung_index, "pc") + wait
                candidates.append((trans + comp, 4, NodeKind.VTS, vts.node_id, rung))

    cdns = sorted(registry.cdns.values(), key=lambda c: (-c.available_bps, c.node_id))
    if 5 in allowed and down > 0 and vts is not None:
        wait = 0.0 if vts.transcode_slots_free > 0 else vts.transcode_queue_len * MEAN_EDGE_JOB_S
        with_higher = [(c, lowest_higher(c.cached, request)) for c in cdns]
        with_higher = [(c, r) for c, r in with_higher if r is not None]
        if with_higher:
            src, rung = with_higher[0]
            if src.available_bps > 0:
                trans = tx(rung, src.available_bps) + tx(request.rung_index, down)
                comp = device_time(rung, request.rung_index, "pc") + wait
                candidates.append((trans + comp, 5, NodeKind.CDN, src.node_id, rung))

    if 6 in allowed and down > 0:
        exact = [c for c in cdns if request in c.cached]
        if exact:
            src = exact[0]
            if src.available_bps > 0:
                trans = tx(request.rung_index, src.available_bps) + tx(request.rung_index, down)
                candidates.append((trans, 6, NodeKind.CDN, src.node_id, None))

    if 7 in allowed and registry.origin is not None and down > 0:
        if registry.origin.available_bps > 0:
            trans = tx(request.rung_index, registry.origin.available_bps) + tx(
                request.rung_index, down
            )
            candidates.append((trans, 7, NodeKind.ORIGIN, registry.origin.node_id, None))

    if not candidates:
        return None
    total, action, kind, node, rung = min(candidates, key=lambda c: (c[0], c[1]))
    return action, kind, node, rung, total


def random_registry(rng: random.Random):
    """A randomized tracker state plus one request and its requester view."""
    registry = Registry()
    n_peers = rng.randint(2, 14)
    n_groups = rng.randint(1, 3)
    segment_space = [
        SegmentRef(c, i, r)
        for c in range(2)
        for i in range(rng.randint(1, 6))
        for r in range(5)
    ]
    for pid in range(n_peers):
        cached = frozenset(rng.sample(segment_space, rng.randint(0, min(5, len(segment_space)))))
        registry.peers[pid] = NodeView(
            node_id=pid,
            kind=NodeKind.PEER,
            role=PeerRole.SEEDER if rng.random() < 0.3 else PeerRole.LEECHER,
            cached=cached,
            join_time_s=round(rng.uniform(0, 300), 3),
            battery_pct=rng.uniform(0, 100),
            device=rng.choice([DeviceClass.PC, DeviceClass.MOBILE]),
            playing=rng.random() < 0.5,
            available_bps=rng.uniform(1e5, 3e7),
            down_bps=rng.uniform(1e6, 3e7),
            group=rng.randrange(n_groups),
            transcode_spent_battery_pct=rng.choice([0.0, rng.uniform(0, 4)]),
        )
    registry.vts = NodeView(
        0,
        NodeKind.VTS,
        cached=frozenset(rng.sample(segment_space, rng.randint(0, min(40, len(segment_space))))),
        transcode_slots_free=rng.randint(0, 4),
        transcode_queue_len=rng.randint(0, 6),
    )
    for cid in range(rng.randint(1, 4)):
        registry.cdns[cid] = NodeView(
            cid,
            NodeKind.CDN,
            cached=frozenset(rng.sample(segment_space, rng.randint(0, len(segment_space)))),
            available_bps=rng.uniform(1e6, 1e8),
        )
    registry.origin = NodeView(0, NodeKind.ORIGIN, available_bps=rng.uniform(1e6, 5e7))
    requester = registry.peers[rng.randrange(n_peers)]
    base = rng.choice(segment_space)
    request = SegmentRef(base.channel_id, base.segment_index, rng.randint(0, 4))
    return registry, requester, request
