"""Deterministic multi-rate episode engine.

One loop walks the sensor clock. Every ``sensor_hz / control_hz`` ticks a
control boundary happens, and at a boundary the engine, in this order:

1. applies responses whose simulated arrival time has passed,
2. asks the policy whether to dispatch (RAPID also scores every sensor tick),
3. issues at most one request and books its latency as one inference cycle,
4. pops one action row (or stalls),
5. for the vision baseline, checks the entropy of the row just executed.

Latency is simulated, never measured, so a run is a pure function of the
scenario, the preset and the seeds, whichever transport carries the bytes.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

from rapid.chunks import ActionChunk, ActionQueue, ChunkSource, Executed
from rapid.cloud.client import CloudClient, InProcessTransport
from rapid.cloud.latency import LatencyModel
from rapid.cloud.service import MockVLA, logit_entropy
from rapid.errors import CloudTimeout, ConfigError, DimensionError
from rapid.metrics import CycleCost, EpisodeRecorder, EpisodeReport, TickRecord
from rapid.sim.observation import make_observation
from rapid.sim.scenario import Scenario, Trajectory, generate
from rapid.trigger import Decision, Dispatcher, TriggerConfig

if TYPE_CHECKING:
    from rapid.config import Preset

log = logging.getLogger(__name__)

CALIBRATION_S = 2.0


class PolicyKind(str, enum.Enum):
    RAPID = "rapid"
    EDGE_ONLY = "edge_only"
    CLOUD_ONLY = "cloud_only"
    VISION_ENTROPY = "vision_entropy"


@dataclass(frozen=True)
class EpisodeRun:
    report: EpisodeReport
    decisions: tuple[Decision, ...]
    trajectory: Trajectory
    v_max: float | None


@dataclass
class _Pending:
    arrival_s: float
    seq: int
    chunk: ActionChunk | None
    entropies: np.ndarray | None


def resolve_vmax(cfg: TriggerConfig, traj: Trajectory) -> TriggerConfig:
    """Fill in ``v_max`` from the first two seconds of the stream when unset."""
    if cfg.v_max is not None:
        return cfg
    n = int(round(CALIBRATION_S * traj.scenario.sensor_hz))
    speeds = np.linalg.norm(traj.qdot[:n], axis=1)
    v = max(float(np.percentile(speeds, 95.0)), 0.1) if speeds.size else 0.1
    return replace(cfg, v_max=v)


class _Engine:
    def __init__(
        self,
        scenario: Scenario,
        policy: PolicyKind,
        cfg: TriggerConfig,
        preset: Preset,
        transport,
        entropy_threshold_bits: float,
        keep_trace: bool,
        trajectory: Trajectory | None,
        service: MockVLA | None,
    ) -> None:
        self.sc = scenario
        self.policy = policy
        preset = preset.with_seed(scenario.seed)
        self.preset = preset
        self.cost = preset.cost(policy.value)
        self.threshold = entropy_threshold_bits
        self.traj = trajectory if trajectory is not None else generate(scenario, cfg.weight_profile)
        if self.traj.qdot.shape[1:] != (scenario.n_joints,):
            raise DimensionError("trajectory joint count differs from the scenario")
        self.service = service or MockVLA(
            n_joints=scenario.n_joints, horizon=preset.horizon, bins=preset.bins, seed=scenario.seed
        )
        if self.service.n_joints != scenario.n_joints:
            raise DimensionError(f"service emits {self.service.n_joints} joints, scenario has {scenario.n_joints}")
        self.cloud = CloudClient(
            transport or InProcessTransport(self.service), latency=preset.cloud, timeout_ms=preset.timeout_ms
        )
        self.edge = CloudClient(
            InProcessTransport(self.service), latency=None, timeout_ms=math.inf, source=ChunkSource.EDGE
        )
        self.edge_latency: LatencyModel = preset.edge
        self.queue = ActionQueue(scenario.n_joints)
        self.dispatcher: Dispatcher | None = None
        self.cfg = cfg
        if policy is PolicyKind.RAPID:
            self.cfg = resolve_vmax(cfg, self.traj)
            self.dispatcher = Dispatcher(self.cfg, scenario.n_joints)
        self.recorder = EpisodeRecorder(
            policy.value, scenario.scenario_id, scenario.seed, scenario.noise_level, preset.name, keep_trace
        )
        self.pending: list[_Pending] = []
        self.entropies: dict[int, np.ndarray] = {}
        self.next_seq = 1
        self.cycle_index = 0

    # -- issuing requests ---------------------------------------------------

    def _observe(self, step: int):
        return make_observation(step, self.sc.noise_level, self.preset.obs_bytes, self.sc.seed)

    def _issue(self, step: int, now: float, kind: str) -> CycleCost:
        """Send one request for control tick ``step``; returns its cost."""
        seq = self.next_seq
        self.next_seq += 1
        idx = self.cycle_index
        self.cycle_index += 1
        edge_share, cloud_share = self.cost.shares()
        routing = self.cost.routing_overhead_ms
        cloud_load, edge_load = self.cost.cloud_load_gb, self.cost.edge_load_gb
        p = self.policy
        if p is PolicyKind.EDGE_ONLY:
            mode, source = "edge", ChunkSource.EDGE
        elif p is PolicyKind.CLOUD_ONLY:
            mode, source = "cloud", ChunkSource.CLOUD
        elif p is PolicyKind.VISION_ENTROPY and kind == "entropy":
            mode, source = "cloud", ChunkSource.CLOUD
            routing += self.preset.offload_overhead_ms
            cloud_load, edge_load = self.preset.total_load_gb, 0.0
        elif p is PolicyKind.VISION_ENTROPY:
            # partitioned cycle: rows land in the edge cache and get entropy-checked
            mode, source = "split", ChunkSource.EDGE
        else:
            mode, source = "split", ChunkSource.CLOUD

        edge_ms = cloud_ms = 0.0
        self.queue.mark_in_flight(seq)
        if mode == "edge":
            reply = self.edge.request_chunk(self._observe(step))
            edge_ms = self.edge_latency.sample(idx)
        else:
            share = 1.0 if mode == "cloud" else cloud_share
            try:
                reply = self.cloud.request_chunk(self._observe(step), share)
            except CloudTimeout as exc:
                log.warning("tick %d: %s", step, exc)
                spent = (self.cloud.retries + 1) * self.cloud.timeout_ms
                self.pending.append(_Pending(now + spent / 1e3, seq, None, None))
                return CycleCost("failed", 0.0, spent, 0.0, cloud_load, edge_load)
            cloud_ms = reply.latency_ms
            if mode == "split":
                edge_ms = self.edge_latency.sample(idx, compute_share=edge_share)
        chunk = ActionChunk(origin_step=step, actions=reply.chunk.actions, source=source, seq=seq)
        # only edge-cache rows are entropy-checked; a cloud re-inference is trusted
        ent = logit_entropy(reply.logits) if p is PolicyKind.VISION_ENTROPY and source is ChunkSource.EDGE else None
        cost = CycleCost(kind, edge_ms, cloud_ms, routing, cloud_load, edge_load)
        self.pending.append(_Pending(now + cost.total_ms / 1e3, seq, chunk, ent))
        return cost

    def _deliver(self, now: float) -> None:
        if not self.pending:
            return
        due = [p for p in self.pending if p.arrival_s <= now + 1e-12]
        if not due:
            return
        self.pending = [p for p in self.pending if p.arrival_s > now + 1e-12]
        due.sort(key=lambda p: (p.arrival_s, p.seq))
        for p in due:
            if p.chunk is None:
                if self.queue.in_flight_seq == p.seq:
                    self.queue.cancel_in_flight()
                continue
            if self.queue.offer(p.chunk) is not None:
                self.entropies = {p.seq: p.entropies} if p.entropies is not None else {}

    # -- main loop ----------------------------------------------------------

    def run(self) -> EpisodeRun:
        sc = self.sc
        tpc = sc.ticks_per_control
        decisions: list[Decision] = []
        disp = self.dispatcher
        for state in self.traj.states():
            i = state.t
            if i % tpc:
                if disp is not None:
                    decisions.append(disp.step(state, False, control_tick=False))
                continue
            now = state.time_s
            step = i // tpc
            self._deliver(now)
            d = None
            if disp is not None:
                d = disp.step(state, self.queue.needs_refill, control_tick=True)
                decisions.append(d)
                dispatch = d.dispatch
                reason = ("anomaly" if d.anomaly else "depletion") if dispatch else ""
                flag = d.flag
            else:
                dispatch = self.queue.needs_refill
                reason = "depletion" if dispatch else ""
                flag = False
            cycle = self._issue(step, now, reason) if dispatch else None

            ex = self.queue.pop_action()
            entropy = math.nan
            if self.policy is PolicyKind.VISION_ENTROPY and isinstance(ex, Executed):
                ent = self.entropies.get(ex.chunk_seq)
                if ent is not None:
                    entropy = float(ent[ex.row])
                    flag = entropy > self.threshold
                    if flag and not self.queue.in_flight:
                        dispatch, reason = True, "entropy"
                        cycle = self._issue(step, now, reason)

            rec = TickRecord(
                tick=step,
                time_s=now,
                phase=state.phase or "",
                flag=flag,
                dispatch=dispatch,
                reason=reason,
                cooldown=d.cooldown_remaining if d else 0,
                m_acc_hat=d.m_acc_hat if d else 0.0,
                m_tau_hat=d.m_tau_hat if d else 0.0,
                s_imp=d.s_imp if d else 0.0,
                entropy_bits=entropy,
                exec_seq=ex.chunk_seq if isinstance(ex, Executed) else -1,
                exec_row=ex.row if isinstance(ex, Executed) else -1,
                stalled=not isinstance(ex, Executed),
                queue_len=self.queue.remaining,
                in_flight=self.queue.in_flight,
                edge_ms=cycle.edge_ms if cycle else 0.0,
                cloud_ms=cycle.cloud_ms if cycle else 0.0,
                routing_ms=cycle.routing_ms if cycle else 0.0,
                cloud_load_gb=cycle.cloud_load_gb if cycle else 0.0,
                edge_load_gb=cycle.edge_load_gb if cycle else 0.0,
            )
            self.recorder.record_step(rec, cycle)
        report = self.recorder.finish(self.queue)
        return EpisodeRun(report, tuple(decisions), self.traj, self.cfg.v_max if disp else None)


def simulate(
    scenario: Scenario,
    policy: PolicyKind | str,
    cfg: TriggerConfig,
    preset: Preset,
    *,
    transport=None,
    entropy_threshold_bits: float | None = None,
    keep_trace: bool = False,
    trajectory: Trajectory | None = None,
    service: MockVLA | None = None,
) -> EpisodeRun:
    """Run one episode and keep the decision stream alongside the report."""
    kind = PolicyKind(policy)
    thr = preset.entropy_threshold_bits if entropy_threshold_bits is None else entropy_threshold_bits
    if kind is PolicyKind.VISION_ENTROPY and not thr >= 0:
        raise ConfigError(f"entropy threshold must be >= 0, got {thr}")
    eng = _Engine(scenario, kind, cfg, preset, transport, thr, keep_trace, trajectory, service)
    return eng.run()


def run_episode(scenario: Scenario, policy: PolicyKind | str, cfg: TriggerConfig, preset: Preset, **kw) -> EpisodeReport:
    return simulate(scenario, policy, cfg, preset, **kw).report


def run_baseline_entropy(scenario: Scenario, threshold_bits: float, preset: Preset, **kw) -> EpisodeReport:
    if not threshold_bits >= 0:
        raise ConfigError(f"entropy threshold must be >= 0, got {threshold_bits}")
    return run_episode(
        scenario, PolicyKind.VISION_ENTROPY, TriggerConfig(), preset, entropy_threshold_bits=threshold_bits, **kw
    )


def pooled_total_ms(reports: Sequence[EpisodeReport]) -> float:
    """Mean total latency over every cycle of every report."""
    cycles = sum(r.cycles for r in reports)
    return sum(r.total_latency_ms.total for r in reports) / cycles if cycles else 0.0


def fit_routing_overhead(
    scenarios: Sequence[Scenario],
    preset: Preset,
    target_ms: float,
    policy: PolicyKind | str = PolicyKind.VISION_ENTROPY,
    tol_ms: float = 1e-6,
    max_iter: int = 20,
) -> tuple[float, Preset]:
    """Solve for the per-cycle routing overhead that brings the pooled mean total to ``target_ms``.

    Every cycle pays the overhead once, so the update is a plain fixed-point
    step and converges in one or two iterations.
    """
    kind = PolicyKind(policy)
    cfg = TriggerConfig()
    routing = preset.cost(kind.value).routing_overhead_ms
    current = preset
    for _ in range(max_iter):
        current = preset.with_routing(kind.value, routing)
        measured = pooled_total_ms([run_episode(s, kind, cfg, current) for s in scenarios])
        gap = target_ms - measured
        if abs(gap) <= tol_ms:
            break
        routing = max(routing + gap, 0.0)
    return routing, current
