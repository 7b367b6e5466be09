"""Per-tick accounting, episode reports, report files and policy comparisons."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from rapid.errors import AccountingError, ComparisonError, RapidError

REPORT_FORMATS = ("json", "yaml")

POLICY_LABELS = {
    "edge_only": "Edge-Only",
    "cloud_only": "Cloud-Only",
    "vision_entropy": "Vision-Entropy",
    "rapid": "RAPID",
}

TRACE_COLUMNS = (
    "tick", "time_s", "phase", "flag", "dispatch", "reason", "cooldown",
    "m_acc_hat", "m_tau_hat", "s_imp", "entropy_bits",
    "exec_seq", "exec_row", "stalled", "queue_len", "in_flight",
    "edge_ms", "cloud_ms", "routing_ms", "cloud_load_gb", "edge_load_gb",
)


class StreamingStats:
    """Welford mean/variance plus a sample log for percentiles."""

    __slots__ = ("count", "mean", "_m2", "total", "_samples")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0
        self.total = 0.0
        self._samples: list[float] = []

    def add(self, x: float) -> None:
        if not math.isfinite(x):
            raise AccountingError(f"non-finite latency {x!r}")
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)
        self.total += x
        self._samples.append(x)

    @property
    def std(self) -> float:
        """Population standard deviation."""
        return math.sqrt(self._m2 / self.count) if self.count else 0.0

    def percentile(self, q: float) -> float:
        return float(np.percentile(self._samples, q)) if self._samples else 0.0

    def summary(self, cycles: int) -> SideLatency:
        return SideLatency(
            count=self.count,
            mean=self.mean,
            std=self.std,
            p50=self.percentile(50),
            p99=self.percentile(99),
            total=self.total,
            per_cycle=self.total / cycles if cycles else 0.0,
        )


@dataclass(frozen=True)
class SideLatency:
    """Latency aggregate for one side. ``mean`` is over calls that used this side,
    ``per_cycle`` spreads the total over every inference cycle (the table column)."""

    count: int = 0
    mean: float = 0.0
    std: float = 0.0
    p50: float = 0.0
    p99: float = 0.0
    total: float = 0.0
    per_cycle: float = 0.0


@dataclass(frozen=True)
class CycleCost:
    """Cost of one inference cycle: one chunk request, however it is split."""

    kind: str  # anomaly | depletion | entropy | failed
    edge_ms: float
    cloud_ms: float
    routing_ms: float
    cloud_load_gb: float
    edge_load_gb: float

    @property
    def total_ms(self) -> float:
        return self.edge_ms + self.cloud_ms + self.routing_ms


@dataclass(frozen=True)
class TickRecord:
    tick: int
    time_s: float
    phase: str
    flag: bool = False
    dispatch: bool = False
    reason: str = ""
    cooldown: int = 0
    m_acc_hat: float = 0.0
    m_tau_hat: float = 0.0
    s_imp: float = 0.0
    entropy_bits: float = math.nan
    exec_seq: int = -1
    exec_row: int = -1
    stalled: bool = False
    queue_len: int = 0
    in_flight: bool = False
    edge_ms: float = 0.0
    cloud_ms: float = 0.0
    routing_ms: float = 0.0
    cloud_load_gb: float = 0.0
    edge_load_gb: float = 0.0


@dataclass(frozen=True)
class EpisodeReport:
    policy: str
    scenario_id: str
    seed: int
    noise_level: float
    preset: str
    ticks: int = 0
    cycles: int = 0
    cloud_latency_ms: SideLatency = field(default_factory=SideLatency)
    edge_latency_ms: SideLatency = field(default_factory=SideLatency)
    routing_latency_ms: SideLatency = field(default_factory=SideLatency)
    total_latency_ms: SideLatency = field(default_factory=SideLatency)
    cloud_load_gb: float = 0.0
    edge_load_gb: float = 0.0
    total_load_gb: float = 0.0
    dispatch_count: int = 0
    trigger_count: int = 0
    anomaly_dispatches: int = 0
    depletion_refills: int = 0
    entropy_offloads: int = 0
    preempted_rows: int = 0
    stall_count: int = 0
    starved_count: int = 0
    dropped_responses: int = 0
    timeouts: int = 0
    enqueued: int = 0
    executed: int = 0
    remaining: int = 0
    decision_digest: str = ""
    trace: tuple[TickRecord, ...] | None = field(default=None, compare=False)

    def to_dict(self, include_trace: bool = False) -> dict:
        d = asdict(self)
        trace = d.pop("trace")
        if include_trace and trace is not None:
            d["trace"] = trace
        d["note"] = "latency mean/std are across inference cycles of this episode"
        return d

    @property
    def label(self) -> str:
        return POLICY_LABELS.get(self.policy, self.policy)

    @property
    def conserved(self) -> bool:
        return self.enqueued == self.executed + self.preempted_rows + self.remaining


class EpisodeRecorder:
    """Single-writer accumulator. Call :meth:`record_step` once per control tick, in order."""

    def __init__(self, policy: str, scenario_id: str, seed: int, noise_level: float, preset: str, keep_trace: bool = False) -> None:
        self.meta = dict(policy=policy, scenario_id=scenario_id, seed=seed, noise_level=noise_level, preset=preset)
        self.keep_trace = keep_trace
        self.trace: list[TickRecord] = []
        self.last_tick = -1
        self.edge = StreamingStats()
        self.cloud = StreamingStats()
        self.routing = StreamingStats()
        self.total = StreamingStats()
        self.cycles = 0
        self.cloud_load = 0.0
        self.edge_load = 0.0
        self.counts = dict.fromkeys(
            ("dispatch_count", "trigger_count", "anomaly_dispatches", "depletion_refills",
             "entropy_offloads", "timeouts"),
            0,
        )
        self._digest = hashlib.sha256()
        self._finished: EpisodeReport | None = None

    def record_step(self, record: TickRecord, cycle: CycleCost | None = None) -> None:
        if self._finished is not None:
            raise AccountingError("report already finalized")
        if record.tick != self.last_tick + 1:
            raise AccountingError(f"tick {record.tick} recorded after {self.last_tick}")
        self.last_tick = record.tick
        c = self.counts
        c["trigger_count"] += record.flag
        c["dispatch_count"] += record.dispatch
        if record.dispatch:
            if record.reason == "anomaly":
                c["anomaly_dispatches"] += 1
            elif record.reason == "depletion":
                c["depletion_refills"] += 1
            elif record.reason == "entropy":
                c["entropy_offloads"] += 1
        if cycle is not None:
            if cycle.kind == "failed":
                c["timeouts"] += 1
            self.cycles += 1
            if cycle.edge_ms > 0:
                self.edge.add(cycle.edge_ms)
            if cycle.cloud_ms > 0:
                self.cloud.add(cycle.cloud_ms)
            if cycle.routing_ms > 0:
                self.routing.add(cycle.routing_ms)
            self.total.add(cycle.total_ms)
            self.cloud_load += cycle.cloud_load_gb
            self.edge_load += cycle.edge_load_gb
        self._digest.update(
            struct.pack("<q??bddd", record.tick, record.flag, record.dispatch,
                        record.cooldown, record.m_acc_hat, record.m_tau_hat, record.s_imp)
        )
        if self.keep_trace:
            self.trace.append(record)

    def finish(self, queue) -> EpisodeReport:
        if self._finished is not None:
            return self._finished
        n = self.cycles
        self._finished = EpisodeReport(
            **self.meta,
            ticks=self.last_tick + 1,
            cycles=n,
            cloud_latency_ms=self.cloud.summary(n),
            edge_latency_ms=self.edge.summary(n),
            routing_latency_ms=self.routing.summary(n),
            total_latency_ms=self.total.summary(n),
            cloud_load_gb=self.cloud_load / n if n else 0.0,
            edge_load_gb=self.edge_load / n if n else 0.0,
            total_load_gb=(self.cloud_load + self.edge_load) / n if n else 0.0,
            preempted_rows=queue.discarded,
            stall_count=queue.stall_count,
            starved_count=queue.starved_count,
            dropped_responses=queue.dropped_responses,
            enqueued=queue.enqueued,
            executed=queue.executed,
            remaining=queue.remaining,
            decision_digest=self._digest.hexdigest(),
            trace=tuple(self.trace) if self.keep_trace else None,
            **self.counts,
        )
        return self._finished


def record_step(recorder: EpisodeRecorder, record: TickRecord, cycle: CycleCost | None = None) -> EpisodeRecorder:
    recorder.record_step(record, cycle)
    return recorder


# ---------------------------------------------------------------- rendering


@dataclass(frozen=True)
class TableRow:
    label: str
    cloud_ms: float | None
    cloud_gb: float
    edge_ms: float | None
    edge_gb: float
    total_mean: float
    total_std: float
    total_gb: float

    @classmethod
    def from_report(cls, r: EpisodeReport) -> TableRow:
        return cls(
            label=r.label,
            cloud_ms=r.cloud_latency_ms.per_cycle if r.cloud_latency_ms.count else None,
            cloud_gb=r.cloud_load_gb,
            edge_ms=r.edge_latency_ms.per_cycle if r.edge_latency_ms.count else None,
            edge_gb=r.edge_load_gb,
            total_mean=r.total_latency_ms.mean,
            total_std=r.total_latency_ms.std,
            total_gb=r.total_load_gb,
        )


@dataclass(frozen=True)
class PolicySummary:
    """Several episodes of one policy pooled together (cycle-weighted means)."""

    policy: str
    episodes: int
    cycles: int
    cloud_ms: float
    edge_ms: float
    routing_ms: float
    total_ms: float
    total_std_across_cycles: float
    total_std_across_episodes: float
    cloud_load_gb: float
    edge_load_gb: float
    anomaly_dispatches: int
    depletion_refills: int
    entropy_offloads: int
    stall_count: int

    def row(self) -> TableRow:
        return TableRow(
            label=POLICY_LABELS.get(self.policy, self.policy),
            cloud_ms=self.cloud_ms if self.cloud_ms else None,
            cloud_gb=self.cloud_load_gb,
            edge_ms=self.edge_ms if self.edge_ms else None,
            edge_gb=self.edge_load_gb,
            total_mean=self.total_ms,
            total_std=self.total_std_across_episodes,
            total_gb=self.cloud_load_gb + self.edge_load_gb,
        )


def summarize(reports: Sequence[EpisodeReport]) -> PolicySummary:
    if not reports:
        raise ComparisonError("nothing to summarize")
    policies = {r.policy for r in reports}
    if len(policies) != 1:
        raise ComparisonError(f"cannot pool different policies: {sorted(policies)}")
    n = sum(r.cycles for r in reports)

    def pooled(get) -> float:
        return sum(get(r) * r.cycles for r in reports) / n if n else 0.0

    total = pooled(lambda r: r.total_latency_ms.mean)
    # pooled population variance across all cycles: E[x^2] - E[x]^2 over the union
    ex2 = pooled(lambda r: r.total_latency_ms.std ** 2 + r.total_latency_ms.mean ** 2)
    means = [r.total_latency_ms.mean for r in reports]
    return PolicySummary(
        policy=reports[0].policy,
        episodes=len(reports),
        cycles=n,
        cloud_ms=pooled(lambda r: r.cloud_latency_ms.per_cycle),
        edge_ms=pooled(lambda r: r.edge_latency_ms.per_cycle),
        routing_ms=pooled(lambda r: r.routing_latency_ms.per_cycle),
        total_ms=total,
        total_std_across_cycles=math.sqrt(max(ex2 - total * total, 0.0)),
        total_std_across_episodes=float(np.std(means)),
        cloud_load_gb=pooled(lambda r: r.cloud_load_gb),
        edge_load_gb=pooled(lambda r: r.edge_load_gb),
        anomaly_dispatches=sum(r.anomaly_dispatches for r in reports),
        depletion_refills=sum(r.depletion_refills for r in reports),
        entropy_offloads=sum(r.entropy_offloads for r in reports),
        stall_count=sum(r.stall_count for r in reports),
    )


def format_table(rows: Sequence[EpisodeReport | TableRow], title: str = "", note: str | None = None) -> str:
    """Cloud-side / edge-side / total columns, one row per report or summary row."""
    head = f"{'Method':<16} | {'Cloud Lat.':>10} {'Load':>7} | {'Edge Lat.':>10} {'Load':>7} | {'Total Lat.':>18} {'Load':>7}"
    rule = "-" * len(head)
    lines = [title] if title else []
    lines += [head, rule]
    for item in rows:
        r = TableRow.from_report(item) if isinstance(item, EpisodeReport) else item
        cloud = f"{r.cloud_ms:.1f}ms" if r.cloud_ms is not None else "--"
        edge = f"{r.edge_ms:.1f}ms" if r.edge_ms is not None else "--"
        cload = f"{r.cloud_gb:.1f}GB" if r.cloud_gb else "--"
        eload = f"{r.edge_gb:.1f}GB" if r.edge_gb else "--"
        total = f"{r.total_mean:.1f} ± {r.total_std:.1f}ms"
        lines.append(
            f"{r.label:<16} | {cloud:>10} {cload:>7} | {edge:>10} {eload:>7} | {total:>18} {r.total_gb:>5.1f}GB"
        )
    lines.append(rule)
    lines.append(note or "Lat. = mean per inference cycle (± std across cycles); side columns average over every cycle.")
    return "\n".join(lines) + "\n"


def trace_csv(trace: Iterable[TickRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for rec in trace:
        row = asdict(rec)
        w.writerow([_csv_cell(row[c]) for c in TRACE_COLUMNS])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def render(report: EpisodeReport, fmt: str) -> str:
    data = report.to_dict()
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True) + "\n"
    if fmt == "yaml":
        return yaml.safe_dump(data, sort_keys=True)
    raise RapidError(f"unknown report format {fmt!r}; choose from {REPORT_FORMATS}")


def emit_report(report: EpisodeReport, path: str | Path, fmt: str = "json") -> list[Path]:
    """Write ``path`` (structured), ``path.txt`` (table) and, with a trace, ``path.trace.csv``."""
    path = Path(path)
    written = []
    outputs = [(path, render(report, fmt)), (path.with_suffix(".txt"), format_table([report], report.scenario_id))]
    if report.trace is not None:
        outputs.append((path.with_suffix(".trace.csv"), trace_csv(report.trace)))
    for target, text in outputs:
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise RapidError(f"cannot write report to {target}: {exc}") from exc
        written.append(target)
    return written


# ---------------------------------------------------------------- comparison


@dataclass(frozen=True)
class PairRatio:
    numerator: str
    denominator: str
    ratio: float  # numerator total latency / denominator total latency


@dataclass(frozen=True)
class Comparison:
    scenario_id: str
    ratios: tuple[PairRatio, ...]
    load_split: dict
    best: str

    def ratio(self, numerator: str, denominator: str) -> float:
        for r in self.ratios:
            if (r.numerator, r.denominator) == (numerator, denominator):
                return r.ratio
            if (r.numerator, r.denominator) == (denominator, numerator):
                return 1.0 / r.ratio
        raise KeyError((numerator, denominator))


def speedup(baseline_ms: float, candidate_ms: float) -> float:
    return baseline_ms / candidate_ms


def compare_runs(reports: Sequence[EpisodeReport]) -> Comparison:
    """Pairwise total-latency ratios; the best policy is the one with the lowest mean total."""
    if len(reports) < 2:
        raise ComparisonError("need at least two reports to compare")
    keys = {(r.scenario_id, r.noise_level) for r in reports}
    if len(keys) != 1:
        raise ComparisonError(f"reports come from different scenarios: {sorted(keys)}")
    names = _unique_names(reports)
    ratios = tuple(
        PairRatio(names[i], names[j], reports[i].total_latency_ms.mean / reports[j].total_latency_ms.mean)
        for i, j in itertools.combinations(range(len(reports)), 2)
    )
    split = {n: (r.cloud_load_gb, r.edge_load_gb) for n, r in zip(names, reports)}
    best = names[min(range(len(reports)), key=lambda i: reports[i].total_latency_ms.mean)]
    return Comparison(scenario_id=reports[0].scenario_id, ratios=ratios, load_split=split, best=best)


def _unique_names(reports: Sequence[EpisodeReport]) -> list[str]:
    names = []
    seen: dict[str, int] = {}
    for r in reports:
        k = seen.get(r.policy, 0)
        seen[r.policy] = k + 1
        names.append(r.policy if k == 0 else f"{r.policy}#{k}")
    return names


def format_comparison(cmp: Comparison) -> str:
    lines = [f"scenario {cmp.scenario_id}; best: {cmp.best}"]
    for r in cmp.ratios:
        lines.append(f"  {r.numerator} / {r.denominator} = {r.ratio:.4f}")
    return "\n".join(lines) + "\n"
