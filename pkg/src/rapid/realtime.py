"""Wall-clock demo: sensor and control loops as two periodic threads.

The sensor thread owns the dispatcher and publishes each control-boundary
decision through a single-slot mailbox; the control thread owns the action
queue, publishes whether it needs a refill, and runs cloud requests on a
helper thread so it never blocks. This mode measures overhead under real
scheduling; it is not deterministic and is not used for acceptance checks.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from rapid.chunks import ActionChunk, ActionQueue
from rapid.cloud.latency import LatencyModel
from rapid.cloud.service import MockVLA
from rapid.sim.scenario import Trajectory
from rapid.trigger import Decision, Dispatcher, TriggerConfig


class Mailbox:
    """Single-slot, last-writer-wins handoff between two threads."""

    def __init__(self, initial=None) -> None:
        self._lock = threading.Lock()
        self._value = initial
        self._version = 0

    def put(self, value) -> None:
        with self._lock:
            self._value = value
            self._version += 1

    def get(self) -> tuple[int, object]:
        with self._lock:
            return self._version, self._value


@dataclass(frozen=True)
class RealtimeStats:
    sensor_ticks: int
    control_ticks: int
    dispatches: int
    stalls: int
    step_p50_us: float
    step_p99_us: float
    late_sensor_ticks: int


def _sleep_until(deadline: float) -> bool:
    """Sleep until ``deadline`` (perf_counter seconds); False if already past it."""
    now = time.perf_counter()
    if now >= deadline:
        return False
    time.sleep(deadline - now)
    return True


def run_realtime(traj: Trajectory, cfg: TriggerConfig, cloud: LatencyModel, horizon: int = 8) -> RealtimeStats:
    sc = traj.scenario
    disp = Dispatcher(cfg, sc.n_joints)
    vla = MockVLA(sc.n_joints, horizon=horizon, seed=sc.seed)
    queue = ActionQueue(sc.n_joints)
    decisions = Mailbox()
    needs_refill = Mailbox(True)
    done = threading.Event()
    step_us: list[float] = []
    late = 0
    tpc = sc.ticks_per_control
    lock = threading.Lock()  # guards queue between the control thread and request completions
    counters = {"dispatches": 0, "control": 0}

    def sensor() -> None:
        nonlocal late
        t0 = time.perf_counter()
        for st in traj.states():
            if not _sleep_until(t0 + st.t / sc.sensor_hz):
                late += 1
            _, empty = needs_refill.get()
            start = time.perf_counter_ns()
            d = disp.step(st, bool(empty), control_tick=st.t % tpc == 0)
            step_us.append((time.perf_counter_ns() - start) / 1e3)
            if d.control_tick is not None:
                decisions.put(d)
        done.set()

    def fetch(step: int, seq: int) -> None:
        time.sleep(cloud.sample(seq) / 1e3)
        actions, _ = vla.infer(step, b"")
        with lock:
            queue.offer(ActionChunk(step, actions, seq=seq))

    def control() -> None:
        seen = 0
        seq = 0
        t0 = time.perf_counter()
        k = 0
        while not done.is_set():
            _sleep_until(t0 + k / sc.control_hz)
            version, d = decisions.get()
            if version != seen and isinstance(d, Decision):
                seen = version
                if d.dispatch:
                    seq += 1
                    counters["dispatches"] += 1
                    with lock:
                        queue.mark_in_flight(seq)
                    threading.Thread(target=fetch, args=(k, seq), daemon=True).start()
            with lock:
                queue.pop_action()
                needs_refill.put(queue.needs_refill)
            counters["control"] += 1
            k += 1

    threads = [threading.Thread(target=sensor, name="sensor"), threading.Thread(target=control, name="control")]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    arr = np.asarray(step_us) if step_us else np.zeros(1)
    return RealtimeStats(
        sensor_ticks=len(step_us),
        control_ticks=counters["control"],
        dispatches=counters["dispatches"],
        stalls=queue.stall_count,
        step_p50_us=float(np.percentile(arr, 50)),
        step_p99_us=float(np.percentile(arr, 99)),
        late_sensor_ticks=late,
    )
