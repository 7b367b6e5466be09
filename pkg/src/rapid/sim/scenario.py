"""Phase-labelled synthetic joint-state streams.

Approach segments move joints in quadrature pairs whose amplitudes are
inversely proportional to the acceleration weights, so the weighted
acceleration vector traces a circle: its magnitude (and its finite
difference) is constant and the torque is held fixed. That is the
"near-zero variance" free-space regime. Interaction segments slow the arm
down, add torque steps and short velocity bumps, which is where the
trigger is supposed to fire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from rapid.errors import ConfigError
from rapid.kinematics import JointState, WeightProfile

SEGMENT_KINDS = ("approach", "interaction", "idle")

# Share of ticks spent in critical interaction per task family.
TASK_CRITICAL_RATIO = {
    "pick_place": 0.175,
    "drawer": 0.136,
    "peg_insertion": 0.188,
}

BLEND_S = 0.02  # velocity hand-over at phase boundaries, placed on the interaction side
TORQUE_RETURN_S = 0.04  # torque ramps back to the free-space value before leaving contact


@dataclass(frozen=True)
class Segment:
    kind: str
    duration_s: float
    velocity_scale: float = 1.0
    torque_spike_amplitude: float = 0.0
    accel_spike_amplitude: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in SEGMENT_KINDS:
            raise ConfigError(f"segment kind must be one of {SEGMENT_KINDS}, got {self.kind!r}")
        if not (math.isfinite(self.duration_s) and self.duration_s >= 0):
            raise ConfigError(f"segment duration must be finite and >= 0, got {self.duration_s}")
        for name in ("velocity_scale", "torque_spike_amplitude", "accel_spike_amplitude"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class Scenario:
    n_joints: int
    segments: tuple[Segment, ...]
    sensor_hz: int = 500
    control_hz: int = 20
    noise_level: float = 0.0
    seed: int = 0
    name: str = "custom"
    # free-space motion: weighted acceleration magnitude per joint pair (rad/s^2) and angular rate (rad/s)
    approach_accel: float = 1.5
    approach_omega: float = 2.0 * math.pi * 0.4
    duration_s: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.n_joints < 1:
            raise ConfigError("n_joints must be >= 1")
        if self.sensor_hz <= 0 or self.control_hz <= 0:
            raise ConfigError("rates must be positive")
        if self.sensor_hz % self.control_hz:
            raise ConfigError(f"sensor_hz {self.sensor_hz} is not a multiple of control_hz {self.control_hz}")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ConfigError(f"noise_level must lie in [0, 1], got {self.noise_level}")
        total = math.fsum(s.duration_s for s in self.segments)
        if self.duration_s is None:
            object.__setattr__(self, "duration_s", total)
        elif abs(self.duration_s - total) > 1e-9:
            raise ConfigError(f"segments last {total} s but duration_s is {self.duration_s}")

    @property
    def ticks_per_control(self) -> int:
        return self.sensor_hz // self.control_hz

    @property
    def scenario_id(self) -> str:
        return f"{self.name}/n{self.n_joints}/seed{self.seed}"

    def segment_ticks(self) -> list[tuple[int, int, Segment]]:
        """``(start, stop, segment)`` in sensor ticks; boundaries are rounded once, cumulatively."""
        out = []
        acc = 0.0
        start = 0
        for seg in self.segments:
            acc += seg.duration_s
            stop = round(acc * self.sensor_hz)
            out.append((start, stop, seg))
            start = stop
        return out

    @property
    def n_ticks(self) -> int:
        spans = self.segment_ticks()
        return spans[-1][1] if spans else 0

    def with_noise(self, noise_level: float) -> Scenario:
        return replace(self, noise_level=noise_level)


@dataclass(frozen=True)
class Trajectory:
    scenario: Scenario
    time_s: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    tau: np.ndarray
    phase: tuple[str, ...]
    interaction_onsets: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.phase)

    def states(self) -> Iterator[JointState]:
        for i in range(len(self.phase)):
            yield JointState(
                t=i,
                time_s=float(self.time_s[i]),
                q=tuple(self.q[i].tolist()),
                qdot=tuple(self.qdot[i].tolist()),
                tau=tuple(self.tau[i].tolist()),
                phase=self.phase[i],
            )

    def critical_ratio(self) -> float:
        if not self.phase:
            return 0.0
        return sum(p == "interaction" for p in self.phase) / len(self.phase)


def _approach_velocity(t: np.ndarray, n: int, weights: np.ndarray, accel: float, omega: float, phase0: np.ndarray) -> np.ndarray:
    """Quadrature joint pairs; each pair's weighted velocity moves on a circle of radius accel/omega."""
    radius = accel / omega
    v = np.empty((t.size, n))
    for j in range(0, n - 1, 2):
        arg = omega * t + phase0[j // 2]
        v[:, j] = radius / weights[j] * np.cos(arg)
        v[:, j + 1] = radius / weights[j + 1] * np.sin(arg)
    if n % 2:
        v[:, n - 1] = radius / weights[n - 1] * 0.5
    return v


def generate(sc: Scenario, weights: WeightProfile | None = None) -> Trajectory:
    """Render a scenario into per-tick arrays. Deterministic in ``sc.seed``."""
    n = sc.n_joints
    w = np.asarray((weights or WeightProfile.ramp(n)).w_a, dtype=np.float64)
    w_tau = np.asarray((weights or WeightProfile.ramp(n)).w_tau, dtype=np.float64)
    total = sc.n_ticks
    dt = 1.0 / sc.sensor_hz
    t = np.arange(total, dtype=np.float64) * dt
    rng = np.random.default_rng([sc.seed, n, 0x5CE])
    phase0 = rng.uniform(0, 2 * math.pi, size=(n + 1) // 2)
    tau_free = rng.uniform(-2.0, 2.0, size=n)

    base = _approach_velocity(t, n, w, sc.approach_accel, sc.approach_omega, phase0)
    qdot = np.zeros((total, n))
    tau = np.tile(tau_free, (total, 1))
    labels: list[str] = []
    onsets: list[int] = []
    blend = max(int(round(BLEND_S * sc.sensor_hz)), 1)
    ret = max(int(round(TORQUE_RETURN_S * sc.sensor_hz)), 1)

    spans = sc.segment_ticks()
    for idx, (a, b, seg) in enumerate(spans):
        labels.extend([seg.kind] * (b - a))
        if b <= a:
            continue
        if seg.kind == "approach":
            qdot[a:b] = seg.velocity_scale * base[a:b]
            continue
        if seg.kind == "idle":
            continue
        onsets.append(a)
        qdot[a:b] = seg.velocity_scale * base[a:b]
        _add_velocity_bumps(qdot, a, b, seg, w, rng, sc.sensor_hz)
        _add_torque_steps(tau, a, b, seg, w_tau, rng, sc.sensor_hz, ret)

    # velocity hand-over into and out of each interaction, inside the interaction span
    for idx, (a, b, seg) in enumerate(spans):
        if seg.kind != "interaction" or b <= a:
            continue
        m = min(blend, (b - a) // 2) or 1
        if idx > 0 and spans[idx - 1][2].kind != "interaction":
            prev = qdot[a - 1] if a > 0 else np.zeros(n)
            target = qdot[min(a + m, b - 1)]
            frac = (np.arange(1, m + 1) / (m + 1))[:, None]
            qdot[a : a + m] = prev + frac * (target - prev)
        if idx + 1 < len(spans) and b < total and spans[idx + 1][2].kind != "interaction":
            start = qdot[max(b - m - 1, a)]
            nxt = qdot[b]
            frac = (np.arange(1, m + 1) / (m + 1))[:, None]
            qdot[b - m : b] = start + frac * (nxt - start)

    q = np.zeros((total, n))
    if total > 1:
        q[1:] = np.cumsum(0.5 * (qdot[1:] + qdot[:-1]) * dt, axis=0)
    return Trajectory(
        scenario=sc,
        time_s=t,
        q=q,
        qdot=qdot,
        tau=tau,
        phase=tuple(labels),
        interaction_onsets=tuple(onsets),
    )


def _add_velocity_bumps(qdot: np.ndarray, a: int, b: int, seg: Segment, w: np.ndarray, rng: np.random.Generator, hz: int) -> None:
    if seg.accel_spike_amplitude <= 0:
        return
    n = qdot.shape[1]
    width = 0.015 * hz  # gaussian sigma in ticks
    count = max(1, int(round((b - a) / hz / 0.4)))
    idx = np.arange(a, b, dtype=np.float64)
    for _ in range(count):
        centre = rng.uniform(a + 3 * width, max(b - 3 * width, a + 3 * width + 1))
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction * w)
        # peak of d/dt of a gaussian bump is amp/(sigma*sqrt(e)); scale so that matches accel_spike_amplitude
        amp = seg.accel_spike_amplitude * (width / hz) * math.sqrt(math.e)
        qdot[a:b] += amp * np.exp(-0.5 * ((idx - centre) / width) ** 2)[:, None] * direction


def _add_torque_steps(tau: np.ndarray, a: int, b: int, seg: Segment, w_tau: np.ndarray, rng: np.random.Generator, hz: int, ret: int) -> None:
    if seg.torque_spike_amplitude <= 0:
        return
    n = tau.shape[1]
    free = tau[a].copy()
    usable = b - ret
    if usable <= a:
        return
    first = a + int(rng.uniform(0.02, 0.06) * hz)
    steps = [min(first, usable - 1)]
    while True:
        nxt = steps[-1] + int(rng.uniform(0.12, 0.35) * hz)
        if nxt >= usable:
            break
        steps.append(nxt)
    level = free.copy()
    for s in steps:
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction * w_tau)
        level = free + seg.torque_spike_amplitude * rng.uniform(0.5, 1.0) * direction
        tau[s:b] = level
    # ramp back to the free-space torque before the segment ends
    frac = (np.arange(1, ret + 1) / ret)[:, None]
    tau[b - ret : b] = level + frac * (free - level)


def task_scenario(
    task: str = "pick_place",
    seed: int = 0,
    n_joints: int = 7,
    duration_s: float = 20.0,
    noise_level: float = 0.0,
    first_approach_s: float = 2.5,
    sensor_hz: int = 500,
    control_hz: int = 20,
) -> Scenario:
    """Alternating approach/interaction episode whose interaction share matches the task family."""
    if task not in TASK_CRITICAL_RATIO:
        raise ConfigError(f"unknown task {task!r}; choose from {sorted(TASK_CRITICAL_RATIO)}")
    if duration_s <= first_approach_s:
        raise ConfigError("duration must exceed the first approach segment")
    rng = np.random.default_rng([seed, 0x7A5C])
    ratio = TASK_CRITICAL_RATIO[task]
    crit_ticks = round(ratio * duration_s * sensor_hz)
    n_inter = max(1, int(round(duration_s / 5.0)))
    cuts = np.sort(rng.uniform(0.6, 1.4, size=n_inter))
    inter = np.floor(cuts / cuts.sum() * crit_ticks).astype(int)
    inter[-1] += crit_ticks - inter.sum()

    free_ticks = round(duration_s * sensor_hz) - crit_ticks - round(first_approach_s * sensor_hz)
    if free_ticks < 0:
        raise ConfigError(f"duration {duration_s} s is too short for the {task} interaction share")
    gaps = rng.uniform(0.7, 1.3, size=n_inter)
    gap = np.floor(gaps / gaps.sum() * free_ticks).astype(int)
    gap[-1] += free_ticks - gap.sum()

    segs = [Segment("approach", round(first_approach_s * sensor_hz) / sensor_hz)]
    for i in range(n_inter):
        segs.append(
            Segment(
                "interaction",
                inter[i] / sensor_hz,
                velocity_scale=0.1,
                torque_spike_amplitude=float(rng.uniform(2.0, 4.0)),
                accel_spike_amplitude=float(rng.uniform(3.0, 6.0)),
            )
        )
        segs.append(Segment("approach", gap[i] / sensor_hz))
    return Scenario(
        n_joints=n_joints,
        segments=tuple(segs),
        sensor_hz=sensor_hz,
        control_hz=control_hz,
        noise_level=noise_level,
        seed=seed,
        name=task,
    )


def trajectory_from_states(
    states: list[JointState],
    sensor_hz: int = 500,
    control_hz: int = 20,
    noise_level: float = 0.0,
    name: str = "replay",
    seed: int = 0,
) -> Trajectory:
    """Wrap a recorded stream so the episode engine can replay it; steps are re-indexed from 0."""
    if not states:
        raise ConfigError("cannot replay an empty stream")
    n = states[0].n_joints
    sc = Scenario(
        n_joints=n,
        segments=(Segment("approach", len(states) / sensor_hz),),
        sensor_hz=sensor_hz,
        control_hz=control_hz,
        noise_level=noise_level,
        seed=seed,
        name=name,
    )
    return Trajectory(
        scenario=sc,
        time_s=np.array([s.time_s for s in states]),
        q=np.array([s.q for s in states]),
        qdot=np.array([s.qdot for s in states]),
        tau=np.array([s.tau for s in states]),
        phase=tuple(s.phase or "" for s in states),
    )
