import random

import pytest

from hybridstream.costs import DeviceClass
from hybridstream.media import SegmentRef
from hybridstream.messaging import (
    CmcdReport,
    CmsdReport,
    ReportParseError,
    apply_report,
    decode_report,
    encode_report,
)
from hybridstream.registry import NodeKind, PeerRole, Registry


def peer_report(**overrides):
    base = dict(
        peer_id=7,
        role=PeerRole.LEECHER,
        join_time_s=12.5,
        battery_pct=84,
        device=DeviceClass.PC,
        playing=True,
        cached=(SegmentRef(0, 42, 2),),
        last_mile_bps=5_000_000,
    )
    base.update(overrides)
    return CmcdReport(**base)


def test_golden_line():
    line = encode_report(peer_report())
    assert line == (
        "x-hc-batt=84,x-hc-bw=5000000,x-hc-cache=0.42.2,x-hc-dev=pc,"
        "x-hc-id=7,x-hc-join=12.500,x-hc-play=1,x-hc-role=l"
    )


def test_empty_cache_encodes_empty_value():
    line = encode_report(peer_report(cached=()))
    assert "x-hc-cache=," in line or line.endswith("x-hc-cache=")


def test_keys_sorted():
    line = encode_report(peer_report())
    keys = [pair.split("=")[0] for pair in line.split(",")]
    assert keys == sorted(keys)


def test_round_trip_peer():
    report = peer_report()
    assert decode_report(encode_report(report)) == report


def test_round_trip_server():
    report = CmsdReport(3, (SegmentRef(1, 9, 4), SegmentRef(0, 2, 0)), 0.625)
    assert decode_report(encode_report(report)) == report


def test_decode_is_order_insensitive():
    line = encode_report(peer_report())
    parts = line.split(",")
    rng = random.Random(0)
    for _ in range(10):
        rng.shuffle(parts)
        assert decode_report(",".join(parts)) == peer_report()


def test_unknown_keys_ignored():
    line = encode_report(peer_report()) + ",foo=1,x-other=zzz"
    assert decode_report(line) == peer_report()


def test_garbage_rejected():
    with pytest.raises(ReportParseError):
        decode_report("complete garbage")
    with pytest.raises(ReportParseError):
        decode_report("")


def test_out_of_range_battery():
    line = encode_report(peer_report()).replace("x-hc-batt=84", "x-hc-batt=120")
    with pytest.raises(ReportParseError) as err:
        decode_report(line)
    assert err.value.key == "x-hc-batt"


def test_bad_triplet():
    line = encode_report(peer_report()).replace("x-hc-cache=0.42.2", "x-hc-cache=0.42")
    with pytest.raises(ReportParseError) as err:
        decode_report(line)
    assert err.value.key == "x-hc-cache"


def test_missing_required_key():
    line = ",".join(
        p for p in encode_report(peer_report()).split(",") if not p.startswith("x-hc-join")
    )
    with pytest.raises(ReportParseError):
        decode_report(line)


def test_fuzz_round_trip():
    rng = random.Random(2024)
    for _ in range(10_000):
        if rng.random() < 0.5:
            cached = tuple(
                SegmentRef(rng.randint(0, 9), rng.randint(0, 10_000), rng.randint(0, 4))
                for _ in range(rng.randint(0, 5))
            )
            report = CmcdReport(
                peer_id=rng.randint(0, 10_000),
                role=rng.choice([PeerRole.SEEDER, PeerRole.LEECHER]),
                join_time_s=round(rng.uniform(0, 10_000), 3),
                battery_pct=rng.randint(0, 100),
                device=rng.choice([DeviceClass.PC, DeviceClass.MOBILE]),
                playing=rng.random() < 0.5,
                cached=cached,
                last_mile_bps=rng.randint(0, 10**9),
            )
        else:
            cached = tuple(
                SegmentRef(rng.randint(0, 9), rng.randint(0, 10_000), rng.randint(0, 4))
                for _ in range(rng.randint(0, 30))
            )
            report = CmsdReport(
                server_id=rng.randint(0, 64),
                cached=cached,
                fill_ratio=round(rng.random(), 3),
            )
        assert decode_report(encode_report(report)) == report


def test_apply_adds_unseen_peer():
    registry = Registry()
    apply_report(registry, peer_report(), now_s=3.0)
    view = registry.peers[7]
    assert view.kind == NodeKind.PEER
    assert view.role == PeerRole.LEECHER
    assert view.cached == {SegmentRef(0, 42, 2)}
    assert view.report_time_s == 3.0


def test_apply_newer_wins_older_ignored():
    registry = Registry()
    apply_report(registry, peer_report(battery_pct=84), now_s=5.0)
    apply_report(registry, peer_report(battery_pct=50), now_s=4.0)
    assert registry.peers[7].battery_pct == 84
    apply_report(registry, peer_report(battery_pct=30), now_s=6.0)
    assert registry.peers[7].battery_pct == 30


def test_apply_preserves_tracker_side_fields():
    registry = Registry()
    apply_report(registry, peer_report(), now_s=1.0)
    registry.peers[7].group = 3
    registry.peers[7].down_bps = 777.0
    registry.peers[7].transcode_spent_battery_pct = 1.25
    apply_report(registry, peer_report(battery_pct=60), now_s=2.0)
    view = registry.peers[7]
    assert view.group == 3
    assert view.down_bps == 777.0
    assert view.transcode_spent_battery_pct == 1.25
    assert view.battery_pct == 60


def test_removed_peer_not_in_registry():
    registry = Registry()
    apply_report(registry, peer_report(), now_s=1.0)
    registry.remove_peer(7)
    assert 7 not in registry.peers


def test_apply_server_report():
    registry = Registry()
    apply_report(registry, CmsdReport(2, (SegmentRef(0, 1, 1),), 0.5), now_s=9.0)
    assert registry.cdns[2].cached == {SegmentRef(0, 1, 1)}
    assert registry.cdns[2].kind == NodeKind.CDN
