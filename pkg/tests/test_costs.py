import math

import pytest

from hybridstream.costs import (
    POWER_ROWS,
    TRANSCODE_ROWS,
    CostTables,
    DeviceClass,
    InvalidTranscodeError,
    UnreachableSourceError,
    transmission_time,
    validate_tables,
)
from hybridstream.media import default_ladder

LADDER = default_ladder()
BY_KBPS = {rep.bitrate_bps // 1000: rep for rep in LADDER}


@pytest.fixture(scope="module")
def tables():
    return CostTables()


def test_time_top_pair_pc(tables):
    # Table row 20.44 s for the 90-segment reference video
    t = tables.transcode_time_per_segment(BY_KBPS[4219], BY_KBPS[2484], DeviceClass.PC)
    assert t == pytest.approx(20.44 / 90)
    assert t == pytest.approx(0.2271, abs=5e-4)


def test_time_bottom_pair_mobile(tables):
    t = tables.transcode_time_per_segment(BY_KBPS[262], BY_KBPS[89], DeviceClass.MOBILE)
    assert t == pytest.approx(5.85 / 90)
    assert t == pytest.approx(0.065, abs=1e-9)


def test_upscale_rejected(tables):
    for device in DeviceClass:
        with pytest.raises(InvalidTranscodeError):
            tables.transcode_time_per_segment(BY_KBPS[89], BY_KBPS[262], device)
        with pytest.raises(InvalidTranscodeError):
            tables.transcoded_vmaf(BY_KBPS[89], BY_KBPS[89], device)


def test_vmaf_exact_values(tables):
    assert tables.transcoded_vmaf(BY_KBPS[4219], BY_KBPS[2484], DeviceClass.PC) == 93.33
    assert tables.transcoded_vmaf(BY_KBPS[4219], BY_KBPS[89], DeviceClass.MOBILE) == 13.75
    assert tables.transcoded_vmaf(BY_KBPS[2484], BY_KBPS[791], DeviceClass.PC) == 71.56


def test_edge_uses_pc_column(tables):
    assert tables.transcoded_vmaf(
        BY_KBPS[4219], BY_KBPS[2484], DeviceClass.EDGE
    ) == tables.transcoded_vmaf(BY_KBPS[4219], BY_KBPS[2484], DeviceClass.PC)
    assert tables.transcode_time_per_segment(
        BY_KBPS[4219], BY_KBPS[2484], DeviceClass.EDGE
    ) == pytest.approx(20.44 / 90)


def test_edge_speed_factor_scales_time():
    fast = CostTables(edge_speed_factor=2.0)
    assert fast.transcode_time_per_segment(
        BY_KBPS[4219], BY_KBPS[2484], DeviceClass.EDGE
    ) == pytest.approx(20.44 / 90 / 2.0)
    # peer timings unaffected
    assert fast.transcode_time_per_segment(
        BY_KBPS[4219], BY_KBPS[2484], DeviceClass.PC
    ) == pytest.approx(20.44 / 90)


def test_battery_measured_profiles(tables):
    kwh, pct = tables.peer_transcode_battery_per_segment(BY_KBPS[791], BY_KBPS[262])
    assert kwh == pytest.approx(130e-3 / 150)
    assert pct == pytest.approx(0.42 / 150)
    kwh, pct = tables.peer_transcode_battery_per_segment(BY_KBPS[4219], BY_KBPS[2484])
    assert kwh == pytest.approx(352e-3 / 150)
    assert pct == pytest.approx(1.14 / 150)


def test_battery_playing_uses_combined_row(tables):
    kwh, pct = tables.peer_transcode_battery_per_segment(
        BY_KBPS[791], BY_KBPS[262], playing=True
    )
    assert kwh == pytest.approx(237e-3 / 150)
    assert pct == pytest.approx(0.77 / 150)


def test_battery_profile_mapping_all_pairs(tables):
    # Independent check of the nearest-target-in-log-scale rule for all pairs.
    profiles = (262_000, 2_484_000)
    pairs = {(s, t) for s, t, d, _, _ in TRANSCODE_ROWS}
    assert len(pairs) == 10
    for s_kbps, t_kbps in pairs:
        expected = min(profiles, key=lambda p: abs(math.log(t_kbps * 1000 / p)))
        assert tables.nearest_power_profile_target(BY_KBPS[t_kbps]) == expected
    # 2484k -> 791k: |ln(791/262)| = 1.105 < |ln(791/2484)| = 1.144
    assert tables.nearest_power_profile_target(BY_KBPS[791]) == 262_000


def test_edge_energy_values(tables):
    assert tables.edge_transcode_energy(0.0) == 0.0
    assert tables.edge_transcode_energy(3600.0) == pytest.approx(0.2)
    double = CostTables(edge_power_watts=400.0)
    assert double.edge_transcode_energy(3600.0) == pytest.approx(0.4)


def test_transmission_time_values():
    assert transmission_time(1_054_750, 100e6) == pytest.approx(0.0844, abs=5e-5)
    assert transmission_time(0, 5e6) == 0.0
    with pytest.raises(UnreachableSourceError):
        transmission_time(100, 0.0)


def test_per_segment_times_within_published_ranges(tables):
    pc = [
        tables.transcode_time_per_segment(BY_KBPS[s], BY_KBPS[t], DeviceClass.PC)
        for s, t, d, _, _ in TRANSCODE_ROWS
        if d == "pc"
    ]
    mob = [
        tables.transcode_time_per_segment(BY_KBPS[s], BY_KBPS[t], DeviceClass.MOBILE)
        for s, t, d, _, _ in TRANSCODE_ROWS
        if d == "mob"
    ]
    assert min(pc) >= 0.014 * 0.95 and max(pc) <= 0.22 * 1.05
    assert min(mob) >= 0.065 * 0.95 and max(mob) <= 0.8 * 1.05


def test_monotonic_in_target_for_fixed_source(tables):
    for device in (DeviceClass.PC, DeviceClass.MOBILE):
        for src in (4219, 2484, 791):
            targets = sorted(t for s, t, d, _, _ in TRANSCODE_ROWS if s == src and d == device.value)
            times = [
                tables.transcode_time_per_segment(BY_KBPS[src], BY_KBPS[t], device)
                for t in targets
            ]
            vmafs = [tables.transcoded_vmaf(BY_KBPS[src], BY_KBPS[t], device) for t in targets]
            assert times == sorted(times)
            assert vmafs == sorted(vmafs)


def test_power_rows_complete():
    assert len(POWER_ROWS) == 6
    assert len(TRANSCODE_ROWS) == 20


def test_validate_tables_clean():
    assert validate_tables() == []
