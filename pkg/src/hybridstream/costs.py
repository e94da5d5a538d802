"""Transcode time, VMAF, power and transmission cost models.

The transcode and power tables are measured values for a fixed reference
video (3 minutes for timings/VMAF, 5 minutes for power), embedded here and
mirrored by the checked-in CSV transcriptions under data/ so the two copies
can be diffed by `hybridstream validate-tables`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .media import Representation

# Reference video lengths expressed in 2-second segments.
TIMING_REFERENCE_SEGMENTS = 90  # 3-minute video behind the time/VMAF table
POWER_REFERENCE_SEGMENTS = 150  # 5-minute video behind the power table


class DeviceClass(str, Enum):
    PC = "pc"
    MOBILE = "mob"
    EDGE = "edge"


class InvalidTranscodeError(ValueError):
    """Raised when asked to transcode to an equal or higher bitrate."""


class UnreachableSourceError(RuntimeError):
    """Raised when a data path has no bandwidth at all."""


# (source_kbps, target_kbps, device, total_time_s, vmaf) -- one row per
# measured (pair, device) combination; 10 pairs x {pc, mob}.
TRANSCODE_ROWS: tuple[tuple[int, int, str, float, float], ...] = (
    (4219, 89, "pc", 4.31, 15.38),
    (4219, 89, "mob", 15.98, 13.75),
    (4219, 262, "pc", 5.33, 44.61),
    (4219, 262, "mob", 18.32, 42.13),
    (4219, 791, "pc", 11.74, 76.21),
    (4219, 791, "mob", 39.28, 73.14),
    (4219, 2484, "pc", 20.44, 93.33),
    (4219, 2484, "mob", 74.91, 91.53),
    (2484, 89, "pc", 3.80, 14.35),
    (2484, 89, "mob", 16.55, 13.01),
    (2484, 262, "pc", 4.83, 42.27),
    (2484, 262, "mob", 18.82, 40.02),
    (2484, 791, "pc", 11.36, 71.56),
    (2484, 791, "mob", 39.76, 69.06),
    (791, 89, "pc", 2.05, 12.21),
    (791, 89, "mob", 10.43, 11.24),
    (791, 262, "pc", 3.35, 36.33),
    (791, 262, "mob", 14.81, 34.76),
    (262, 89, "pc", 1.28, 11.01),
    (262, 89, "mob", 5.85, 10.32),
)

# (operation, profile_source_kbps, profile_target_kbps, power_kwh_e3, battery_pct)
# per 5-minute video on a peer device; two measured transcode profiles.
POWER_ROWS: tuple[tuple[str, int, int, float, float], ...] = (
    ("PLY", 791, 262, 119.0, 0.39),
    ("PLY", 4219, 2484, 152.0, 0.49),
    ("TR", 791, 262, 130.0, 0.42),
    ("TR", 4219, 2484, 352.0, 1.14),
    ("TR+PLY", 791, 262, 237.0, 0.77),
    ("TR+PLY", 4219, 2484, 479.0, 1.55),
)

PER_SEGMENT_TIME_RANGES = {  # published endpoints, checked with 5% slack
    DeviceClass.PC: (0.014, 0.22),
    DeviceClass.MOBILE: (0.065, 0.8),
}


@dataclass(frozen=True)
class TranscodeEntry:
    source_bps: int
    target_bps: int
    device: DeviceClass
    total_time_s: float
    vmaf: float


@dataclass(frozen=True)
class PowerEntry:
    operation: str  # PLY | TR | TR+PLY
    profile_source_bps: int
    profile_target_bps: int
    power_kwh_e3: float
    battery_pct: float


def _bps(rep_or_bps: Representation | int) -> int:
    return rep_or_bps.bitrate_bps if isinstance(rep_or_bps, Representation) else int(rep_or_bps)


@dataclass
class CostTables:
    """Immutable-after-construction lookup tables; safe for shared reads."""

    edge_power_watts: float = 200.0
    edge_speed_factor: float = 1.0
    transcode_entries: tuple[TranscodeEntry, ...] = ()
    power_entries: tuple[PowerEntry, ...] = ()

    def __post_init__(self) -> None:
        if self.edge_speed_factor <= 0:
            raise ValueError("edge_speed_factor must be > 0")
        if not self.transcode_entries:
            self.transcode_entries = tuple(
                TranscodeEntry(s * 1000, t * 1000, DeviceClass(d), ts, v)
                for s, t, d, ts, v in TRANSCODE_ROWS
            )
        if not self.power_entries:
            self.power_entries = tuple(
                PowerEntry(op, s * 1000, t * 1000, p, b) for op, s, t, p, b in POWER_ROWS
            )
        self._time = {}
        self._vmaf = {}
        for e in self.transcode_entries:
            self._time[(e.source_bps, e.target_bps, e.device)] = e.total_time_s
            self._vmaf[(e.source_bps, e.target_bps, e.device)] = e.vmaf
        self._power = {
            (e.operation, e.profile_target_bps): e for e in self.power_entries
        }
        self._profile_targets = sorted({e.profile_target_bps for e in self.power_entries})
        pc_times = [e.total_time_s for e in self.transcode_entries if e.device == DeviceClass.PC]
        self._mean_edge_job_s = (
            sum(pc_times) / len(pc_times) / TIMING_REFERENCE_SEGMENTS / self.edge_speed_factor
        )

    @property
    def mean_edge_job_time_s(self) -> float:
        """Mean per-segment edge transcode time; used for queue wait estimates."""
        return self._mean_edge_job_s

    def _pair(self, source, target) -> tuple[int, int]:
        s, t = _bps(source), _bps(target)
        if s <= t:
            raise InvalidTranscodeError(f"cannot transcode {s} bps up to {t} bps")
        return s, t

    def transcode_time_per_segment(self, source, target, device: DeviceClass) -> float:
        """Seconds to transcode one segment on the given device class."""
        s, t = self._pair(source, target)
        if device == DeviceClass.EDGE:
            return self._time[(s, t, DeviceClass.PC)] / TIMING_REFERENCE_SEGMENTS / self.edge_speed_factor
        return self._time[(s, t, device)] / TIMING_REFERENCE_SEGMENTS

    def transcoded_vmaf(self, source, target, device: DeviceClass) -> float:
        """Perceptual quality of the transcoded output (edge uses the PC column)."""
        s, t = self._pair(source, target)
        if device == DeviceClass.EDGE:
            device = DeviceClass.PC
        return self._vmaf[(s, t, device)]

    def nearest_power_profile_target(self, target) -> int:
        """Measured profile closest to the job's target bitrate in log scale."""
        t = _bps(target)
        return min(self._profile_targets, key=lambda p: abs(math.log(t / p)))

    def peer_transcode_battery_per_segment(
        self, source, target, playing: bool = False
    ) -> tuple[float, float]:
        """(kWh, battery %) one peer transcode costs; TR+PLY row while playing."""
        self._pair(source, target)
        profile = self.nearest_power_profile_target(target)
        entry = self._power[("TR+PLY" if playing else "TR", profile)]
        return (
            entry.power_kwh_e3 * 1e-3 / POWER_REFERENCE_SEGMENTS,
            entry.battery_pct / POWER_REFERENCE_SEGMENTS,
        )

    def edge_transcode_energy(self, job_time_s: float) -> float:
        """kWh drawn by the edge server for one transcode job."""
        if job_time_s < 0:
            raise ValueError("job_time_s must be >= 0")
        return job_time_s * self.edge_power_watts / 3.6e6


def transmission_time(nbytes: int, available_bps: float) -> float:
    """Fluid-model transfer time for nbytes at the given share."""
    if nbytes == 0:
        return 0.0
    if available_bps <= 0:
        raise UnreachableSourceError("no bandwidth available on path")
    return nbytes * 8.0 / available_bps


def _read_packaged_csv(name: str) -> list[list[str]]:
    with resources.files("hybridstream.data").joinpath(name).open() as fh:
        return [row for row in csv.reader(fh) if row][1:]  # skip header


def validate_tables() -> list[str]:
    """Diff embedded tables against the checked-in CSV transcription.

    Also checks the structural sanity of the embedded data (monotonicity,
    published per-segment ranges, power sub-additivity). Returns a list of
    problem descriptions; empty means the tables are pristine.
    """
    problems: list[str] = []

    csv_transcode = {
        (int(r[0]), int(r[1]), r[2]): (float(r[3]), float(r[4]))
        for r in _read_packaged_csv("transcode_table.csv")
    }
    emb_transcode = {(s, t, d): (ts, v) for s, t, d, ts, v in TRANSCODE_ROWS}
    for key in sorted(set(csv_transcode) | set(emb_transcode)):
        a, b = emb_transcode.get(key), csv_transcode.get(key)
        if a != b:
            problems.append(f"transcode row {key}: embedded {a} != transcription {b}")

    csv_power = {
        (r[0], int(r[1]), int(r[2])): (float(r[3]), float(r[4]))
        for r in _read_packaged_csv("power_table.csv")
    }
    emb_power = {(op, s, t): (p, b) for op, s, t, p, b in POWER_ROWS}
    for key in sorted(set(csv_power) | set(emb_power)):
        a, b = emb_power.get(key), csv_power.get(key)
        if a != b:
            problems.append(f"power row {key}: embedded {a} != transcription {b}")

    tables = CostTables()
    by_dev_src: dict[tuple[str, int], list[tuple[int, float, float]]] = {}
    for s, t, d, ts, v in TRANSCODE_ROWS:
        by_dev_src.setdefault((d, s), []).append((t, ts, v))
    for (d, s), rows in by_dev_src.items():
        rows.sort()
        for (t0, ts0, v0), (t1, ts1, v1) in zip(rows, rows[1:]):
            if ts1 <= ts0:
                problems.append(f"time not increasing with target: {d} {s}k {t0}k->{t1}k")
            if v1 <= v0:
                problems.append(f"vmaf not increasing with target: {d} {s}k {t0}k->{t1}k")
    by_dev_tgt: dict[tuple[str, int], list[tuple[int, float]]] = {}
    for s, t, d, _, v in TRANSCODE_ROWS:
        by_dev_tgt.setdefault((d, t), []).append((s, v))
    for (d, t), rows in by_dev_tgt.items():
        rows.sort()
        for (s0, v0), (s1, v1) in zip(rows, rows[1:]):
            if v1 <= v0:
                problems.append(f"vmaf not increasing with source: {d} target {t}k {s0}k->{s1}k")

    for dev, (lo, hi) in PER_SEGMENT_TIME_RANGES.items():
        per_seg = [
            ts / TIMING_REFERENCE_SEGMENTS for s, t, d, ts, v in TRANSCODE_ROWS if d == dev.value
        ]
        if min(per_seg) < lo * 0.95 or max(per_seg) > hi * 1.05:
            problems.append(
                f"{dev.value} per-segment times {min(per_seg):.4f}..{max(per_seg):.4f} "
                f"outside published range [{lo}, {hi}] (5% slack)"
            )

    for profile in tables._profile_targets:
        ply = tables._power[("PLY", profile)]
        tr = tables._power[("TR", profile)]
        both = tables._power[("TR+PLY", profile)]
        if both.power_kwh_e3 > (ply.power_kwh_e3 + tr.power_kwh_e3) * 1.05:
            problems.append(f"TR+PLY power not sub-additive for profile target {profile}")

    return problems
