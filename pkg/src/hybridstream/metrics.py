"""Run metrics: serving latency, QoE proxy, energy rollups, policy comparisons."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .config import ScenarioConfig
from .costs import CostTables, DeviceClass
from .decision import Action, Decision
from .media import Representation, SegmentRef


class EmptySessionError(ValueError):
    pass


@dataclass(frozen=True)
class RequestRecord:
    """One served segment request, as written to the trace."""

    issue_time_s: float
    client_id: int
    channel_id: int
    segment_index: int
    rung_index: int
    action: int
    source_kind: str
    source_id: int
    transcode_source_rung: int | None
    transcode_device: str | None
    transcode_while_playing: bool
    transmission_s: float
    computation_s: float
    serving_latency_s: float
    delivered_vmaf: float
    stall_contribution_s: float
    attempts: int
    # False when a transcode was shared with a concurrent request for the
    # same output; energy is charged to the owning record only.
    owns_transcode_job: bool = True

    CSV_HEADER = (
        "issue_time_s,client_id,channel_id,segment_index,rung_index,action,"
        "source_kind,source_id,transcode_source_rung,transcode_device,"
        "transcode_while_playing,transmission_s,computation_s,serving_latency_s,"
        "delivered_vmaf,stall_contribution_s,attempts,owns_transcode_job"
    )

    def csv_row(self) -> str:
        return ",".join(
            [
                repr(self.issue_time_s),
                str(self.client_id),
                str(self.channel_id),
                str(self.segment_index),
                str(self.rung_index),
                str(self.action),
                self.source_kind,
                str(self.source_id),
                "" if self.transcode_source_rung is None else str(self.transcode_source_rung),
                self.transcode_device or "",
                "1" if self.transcode_while_playing else "0",
                repr(self.transmission_s),
                repr(self.computation_s),
                repr(self.serving_latency_s),
                repr(self.delivered_vmaf),
                repr(self.stall_contribution_s),
                str(self.attempts),
                "1" if self.owns_transcode_job else "0",
            ]
        )


@dataclass
class MetricsSummary:
    """Per-run aggregates over the request trace."""

    mean_serving_latency_s: float = 0.0
    mean_qoe: float = 0.0
    edge_energy_kwh: float = 0.0
    peer_energy_kwh: float = 0.0
    action_histogram: dict[int, int] = field(
        default_factory=lambda: {a.value: 0 for a in Action}
    )
    stall_ratio: float = 0.0
    mean_delivered_bitrate_bps: float = 0.0
    served_count: int = 0
    failed_count: int = 0
    vts_transcode_count: int = 0
    peer_transcode_count: int = 0

    def as_flat_dict(self) -> dict[str, float]:
        flat = {
            "mean_serving_latency_s": self.mean_serving_latency_s,
            "mean_qoe": self.mean_qoe,
            "edge_energy_kwh": self.edge_energy_kwh,
            "peer_energy_kwh": self.peer_energy_kwh,
            "stall_ratio": self.stall_ratio,
            "mean_delivered_bitrate_bps": self.mean_delivered_bitrate_bps,
            "served_count": float(self.served_count),
            "failed_count": float(self.failed_count),
            "vts_transcode_count": float(self.vts_transcode_count),
            "peer_transcode_count": float(self.peer_transcode_count),
        }
        for a in Action:
            flat[f"action_{a.value}_count"] = float(self.action_histogram.get(a.value, 0))
        return flat

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["action_histogram"] = {str(k): v for k, v in self.action_histogram.items()}
        return d


COMPARISON_METRICS = tuple(MetricsSummary().as_flat_dict().keys())

TRANSCODE_ACTIONS = (
    Action.P2P_TRANSCODE.value,
    Action.VTS_TRANSCODE.value,
    Action.CDN_FETCH_VTS_TRANSCODE.value,
)


def qoe_proxy(
    session: Sequence[RequestRecord],
    total_stall_s: float,
    playback_duration_s: float,
    switch_weight: float = 1.0,
    stall_weight: float = 1.0,
) -> float:
    """Session score on a 1..5 scale from delivered quality, switching and stalls.

    score = 1 + 4 * clamp01(mean_vmaf/100
                            - switch_weight * mean |vmaf step| / 100
                            - stall_weight * stall_time / playback_duration)
    """
    if not session:
        raise EmptySessionError("QoE is undefined for an empty session")
    vmafs = [r.delivered_vmaf for r in session]
    base = sum(vmafs) / len(vmafs) / 100.0
    if len(vmafs) > 1:
        steps = [abs(b - a) for a, b in zip(vmafs, vmafs[1:])]
        switch_pen = switch_weight * (sum(steps) / len(steps)) / 100.0
    else:
        switch_pen = 0.0
    stall_pen = stall_weight * (total_stall_s / playback_duration_s) if playback_duration_s > 0 else 0.0
    return 1.0 + 4.0 * min(1.0, max(0.0, base - switch_pen - stall_pen))


def delivered_vmaf_of(
    decision: Decision,
    request: SegmentRef,
    ladder: Sequence[Representation],
    tables: CostTables,
    reference_vmaf: Sequence[float],
    executing_device: DeviceClass | None = None,
) -> float:
    """Quality of what the client receives under this serving plan."""
    if decision.action in (Action.P2P_TRANSCODE, Action.VTS_TRANSCODE, Action.CDN_FETCH_VTS_TRANSCODE):
        device = executing_device
        if decision.action != Action.P2P_TRANSCODE:
            device = DeviceClass.EDGE
        if device is None:
            raise ValueError("peer transcode needs the executing device")
        return tables.transcoded_vmaf(
            ladder[decision.transcode_source_rung], ladder[request.rung_index], device
        )
    return float(reference_vmaf[request.rung_index])


def energy_rollup(
    records: Iterable[RequestRecord],
    tables: CostTables,
    ladder: Sequence[Representation],
) -> tuple[float, float]:
    """(edge kWh, peer kWh) spent on transcodes across the trace."""
    edge_kwh = 0.0
    peer_kwh = 0.0
    for r in records:
        if not r.owns_transcode_job:
            continue
        if r.action in (Action.VTS_TRANSCODE.value, Action.CDN_FETCH_VTS_TRANSCODE.value):
            job_s = tables.transcode_time_per_segment(
                ladder[r.transcode_source_rung], ladder[r.rung_index], DeviceClass.EDGE
            )
            edge_kwh += tables.edge_transcode_energy(job_s)
        elif r.action == Action.P2P_TRANSCODE.value:
            kwh, _ = tables.peer_transcode_battery_per_segment(
                ladder[r.transcode_source_rung],
                ladder[r.rung_index],
                playing=r.transcode_while_playing,
            )
            peer_kwh += kwh
    return edge_kwh, peer_kwh


def summarize(
    records: Sequence[RequestRecord],
    tables: CostTables,
    ladder: Sequence[Representation],
    segment_duration_s: float,
    switch_weight: float = 1.0,
    stall_weight: float = 1.0,
    failed_count: int = 0,
) -> MetricsSummary:
    """Pure function of the trace; recomputable from a dumped trace file."""
    summary = MetricsSummary(failed_count=failed_count)
    if not records:
        return summary
    summary.served_count = len(records)
    summary.mean_serving_latency_s = sum(r.serving_latency_s for r in records) / len(records)
    summary.mean_delivered_bitrate_bps = sum(
        ladder[r.rung_index].bitrate_bps for r in records
    ) / len(records)
    for r in records:
        summary.action_histogram[r.action] += 1
        if r.owns_transcode_job:
            if r.action in (
                Action.VTS_TRANSCODE.value,
                Action.CDN_FETCH_VTS_TRANSCODE.value,
            ):
                summary.vts_transcode_count += 1
            elif r.action == Action.P2P_TRANSCODE.value:
                summary.peer_transcode_count += 1
    summary.edge_energy_kwh, summary.peer_energy_kwh = energy_rollup(records, tables, ladder)

    sessions: dict[int, list[RequestRecord]] = {}
    for r in records:
        sessions.setdefault(r.client_id, []).append(r)
    qoes = []
    total_stall = 0.0
    total_media = 0.0
    for recs in sessions.values():
        recs.sort(key=lambda r: (r.segment_index, r.issue_time_s))
        stall = sum(r.stall_contribution_s for r in recs)
        media = len(recs) * segment_duration_s
        qoes.append(qoe_proxy(recs, stall, media, switch_weight, stall_weight))
        total_stall += stall
        total_media += media
    summary.mean_qoe = sum(qoes) / len(qoes)
    summary.stall_ratio = (
        total_stall / (total_media + total_stall) if total_media + total_stall > 0 else 0.0
    )
    return summary


def _compare_worker(args: tuple[ScenarioConfig, str, int]) -> tuple[str, int, MetricsSummary]:
    from .simulator import run  # deferred: simulator depends on this module

    scenario, policy, seed = args
    sc = ScenarioConfig(**{**asdict(scenario), "policy": policy, "seed": seed})
    return policy, seed, run(sc).summary


@dataclass
class PolicyComparison:
    policies: tuple[str, ...]
    seeds: tuple[int, ...]
    summaries: dict[tuple[str, int], MetricsSummary]

    def stats(self, policy: str, metric: str) -> tuple[float, float]:
        values = [self.summaries[(policy, s)].as_flat_dict()[metric] for s in self.seeds]
        mean = sum(values) / len(values)
        stdev = statistics.stdev(values) if len(values) > 1 else 0.0
        return mean, stdev

    def mean(self, policy: str, metric: str) -> float:
        return self.stats(policy, metric)[0]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["policy", "metric", "mean", "stdev"])
        for policy in self.policies:
            for metric in COMPARISON_METRICS:
                mean, stdev = self.stats(policy, metric)
                writer.writerow([policy, metric, repr(mean), repr(stdev)])
        return out.getvalue()


def compare_policies(
    scenario: ScenarioConfig,
    policies: Sequence[str],
    repetitions: int,
    workers: int = 1,
) -> PolicyComparison:
    """Run each policy on the same seeds (paired design) and aggregate.

    Runs are independent; with workers > 1 they execute in parallel processes.
    The result is identical either way: summaries are keyed by (policy, seed).
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    seeds = tuple(scenario.seed + i for i in range(repetitions))
    jobs = [(scenario, policy, seed) for policy in policies for seed in seeds]
    summaries: dict[tuple[str, int], MetricsSummary] = {}
    if workers > 1 and len(jobs) > 1:
        import multiprocessing

        with multiprocessing.Pool(workers) as pool:
            for policy, seed, summary in pool.map(_compare_worker, jobs):
                summaries[(policy, seed)] = summary
    else:
        for job in jobs:
            policy, seed, summary = _compare_worker(job)
            summaries[(policy, seed)] = summary
    return PolicyComparison(tuple(policies), seeds, summaries)


def parse_comparison_csv(text: str) -> dict[tuple[str, str], tuple[float, float]]:
    """comparison.csv rows back to {(policy, metric): (mean, stdev)}."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["policy", "metric", "mean", "stdev"]:
        raise ValueError("not a comparison CSV")
    return {(r[0], r[1]): (float(r[2]), float(r[3])) for r in rows[1:] if r}
