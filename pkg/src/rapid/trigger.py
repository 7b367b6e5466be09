"""Velocity-weighted dual-threshold offloading trigger with cooldown.

The :class:`Dispatcher` runs at sensor rate. Each call to :meth:`Dispatcher.step`
scores one joint-state sample; on control-rate boundaries it also decides
whether to fetch a fresh action chunk. Triggers that fire between two
control boundaries are latched (OR-ed) into an interrupt flag, so a spike
that lasts a single sensor tick is never lost to the slower loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from rapid.errors import ConfigError, DimensionError
from rapid.kinematics import JointState, WeightProfile, joint_speed, kinematic_sample
from rapid.rolling import ExponentialStats, RollingWindow, normalize

STATS_MODES = ("window", "exponential")


@dataclass(frozen=True)
class TriggerConfig:
    """Thresholds, normalizers and window sizes for the dispatcher.

    ``v_max=None`` means "calibrate from the stream" (see :func:`calibrate_vmax`);
    a :class:`Dispatcher` refuses to start until it is resolved.
    Window lengths are in sensor ticks, ``cooldown_steps`` in control ticks.
    """

    theta_comp: float = 0.65
    theta_red: float = 0.35
    v_max: float | None = None
    cooldown_steps: int = 10
    eps: float = 1e-6
    w_a_len: int = 250
    w_tau_len: int = 50
    w_tau_stats_len: int = 250
    weight_profile: WeightProfile | None = None
    stats_mode: str = "window"
    decay: float = 0.998
    nominal_dt: float | None = None
    acc_branch: bool = True
    torque_branch: bool = True

    def __post_init__(self) -> None:
        for name in ("theta_comp", "theta_red"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.v_max is not None and not (math.isfinite(self.v_max) and self.v_max > 0):
            raise ConfigError(f"v_max must be positive, got {self.v_max}")
        if self.cooldown_steps < 0:
            raise ConfigError("cooldown_steps must be >= 0")
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ConfigError("eps must be positive")
        for name in ("w_a_len", "w_tau_len", "w_tau_stats_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.stats_mode not in STATS_MODES:
            raise ConfigError(f"stats_mode must be one of {STATS_MODES}")
        if self.nominal_dt is not None and not self.nominal_dt > 0:
            raise ConfigError("nominal_dt must be positive")

    @property
    def warmup_ticks(self) -> int:
        return max(self.w_a_len, self.w_tau_len, self.w_tau_stats_len)

    def with_overrides(self, **kwargs) -> TriggerConfig:
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


@dataclass(frozen=True, slots=True)
class Decision:
    """Everything the dispatcher computed for one sensor tick.

    ``trigger`` is the instantaneous dual-threshold bit for this sample.
    ``flag`` is the latched interrupt flag consumed at a control boundary
    (always False off-boundary); ``dispatch`` is only ever set on a boundary.
    ``anomaly`` marks a dispatch the cooldown-masked flag produced by itself;
    any other dispatch is a refill of an empty queue.
    ``cooldown_remaining`` is the counter value after this tick's update.
    """

    t: int
    control_tick: int | None
    m_acc: float
    m_tau: float
    m_acc_hat: float
    m_tau_hat: float
    omega_a: float
    omega_tau: float
    s_imp: float
    trigger: bool
    flag: bool
    queue_empty: bool
    dispatch: bool
    anomaly: bool
    cooldown_remaining: int

    @property
    def depletion(self) -> bool:
        return self.dispatch and not self.anomaly


def phase_weights(v: float, v_max: float) -> tuple[float, float]:
    """``omega_a = clip(v / v_max, 0, 1)`` and its complement."""
    if not v_max > 0:
        raise ConfigError(f"v_max must be positive, got {v_max}")
    omega_a = v / v_max
    if omega_a > 1.0:
        omega_a = 1.0
    elif not omega_a > 0.0:
        omega_a = 0.0
    return omega_a, 1.0 - omega_a


def importance_score(omega_a: float, m_acc_hat: float, omega_tau: float, m_tau_hat: float) -> float:
    return omega_a * m_acc_hat + omega_tau * m_tau_hat


def evaluate_trigger(
    omega_a: float, m_acc_hat: float, omega_tau: float, m_tau_hat: float, cfg: TriggerConfig
) -> bool:
    """True iff either weighted score strictly exceeds its threshold."""
    return (cfg.acc_branch and omega_a * m_acc_hat > cfg.theta_comp) or (
        cfg.torque_branch and omega_tau * m_tau_hat > cfg.theta_red
    )


def apply_cooldown(
    trigger: bool, cooldown: int, cooldown_steps: int, queue_empty: bool = False
) -> tuple[bool, int]:
    """Mask the trigger with the cooldown counter; returns ``(dispatch, new_cooldown)``.

    An empty queue always dispatches so the arm never starves, but only a
    dispatch with the trigger raised re-arms the cooldown.
    """
    dispatch = (trigger and cooldown == 0) or queue_empty
    if dispatch and trigger:
        return True, cooldown_steps
    return dispatch, max(cooldown - 1, 0)


def calibrate_vmax(
    states: Iterable[JointState],
    sensor_hz: float,
    prefix_s: float = 2.0,
    percentile: float = 95.0,
    floor: float = 0.1,
) -> float:
    """95th-percentile joint speed over the first ``prefix_s`` seconds, floored."""
    n = int(round(prefix_s * sensor_hz))
    speeds = []
    for i, s in enumerate(states):
        if i >= n:
            break
        speeds.append(joint_speed(s.qdot))
    if not speeds:
        return floor
    return max(float(np.percentile(speeds, percentile)), floor)


@dataclass
class DispatcherState:
    acc_window: RollingWindow | ExponentialStats
    tau_window: RollingWindow | ExponentialStats
    tv_window: RollingWindow
    cooldown: int = 0
    last_decision: Decision | None = None
    prev_joint_state: JointState | None = None
    scored: int = 0
    latch: bool = False
    control_ticks: int = 0


class Dispatcher:
    """Stateful per-tick offloading decision maker.

    Single-writer: only the sensor-rate task may call :meth:`step`.
    """

    def __init__(self, cfg: TriggerConfig, n_joints: int) -> None:
        if cfg.v_max is None:
            raise ConfigError("v_max is unresolved; calibrate it before building a Dispatcher")
        weights = cfg.weight_profile or WeightProfile.ramp(n_joints)
        if weights.n_joints != n_joints:
            raise DimensionError(f"weight profile has {weights.n_joints} joints, expected {n_joints}")
        self.cfg = replace(cfg, weight_profile=weights)
        self.n_joints = n_joints
        self._weights = weights
        self._warmup = cfg.warmup_ticks
        self.state = DispatcherState(
            acc_window=self._stats_window(cfg.w_a_len),
            tau_window=self._stats_window(cfg.w_tau_stats_len),
            tv_window=RollingWindow(cfg.w_tau_len),
        )

    def _stats_window(self, capacity: int) -> RollingWindow | ExponentialStats:
        if self.cfg.stats_mode == "exponential":
            return ExponentialStats(self.cfg.decay)
        return RollingWindow(capacity)

    def step(self, sample: JointState, queue_empty: bool = False, control_tick: bool = True) -> Decision:
        """Score ``sample``; on a control boundary, also decide whether to dispatch.

        ``queue_empty`` is only consulted on control boundaries.
        """
        st = self.state
        cfg = self.cfg
        prev = st.prev_joint_state
        if prev is None:
            if sample.n_joints != self.n_joints:
                raise DimensionError(f"expected {self.n_joints} joints, got {sample.n_joints}")
            m_acc = m_tau = m_acc_hat = m_tau_hat = 0.0
            v = joint_speed(sample.qdot)
        else:
            ks = kinematic_sample(prev, sample, self._weights, cfg.nominal_dt)
            st.tv_window.push(ks.tv)
            m_acc = ks.m_acc
            m_tau = st.tv_window.mean
            m_acc_hat = normalize(st.acc_window, m_acc, cfg.eps).z
            st.acc_window.push(m_acc)
            m_tau_hat = normalize(st.tau_window, m_tau, cfg.eps).z
            st.tau_window.push(m_tau)
            st.scored += 1
            v = ks.v
        st.prev_joint_state = sample

        omega_a, omega_tau = phase_weights(v, cfg.v_max)
        trigger = st.scored > self._warmup and evaluate_trigger(
            omega_a, m_acc_hat, omega_tau, m_tau_hat, cfg
        )
        st.latch = st.latch or trigger

        if control_tick:
            flag = st.latch
            st.latch = False
            anomaly = flag and st.cooldown == 0
            dispatch, st.cooldown = apply_cooldown(flag, st.cooldown, cfg.cooldown_steps, queue_empty)
            tick = st.control_ticks
            st.control_ticks += 1
        else:
            flag = dispatch = anomaly = False
            queue_empty = False
            tick = None

        decision = Decision(
            t=sample.t,
            control_tick=tick,
            m_acc=m_acc,
            m_tau=m_tau,
            m_acc_hat=m_acc_hat,
            m_tau_hat=m_tau_hat,
            omega_a=omega_a,
            omega_tau=omega_tau,
            s_imp=omega_a * m_acc_hat + omega_tau * m_tau_hat,
            trigger=trigger,
            flag=flag,
            queue_empty=queue_empty,
            dispatch=dispatch,
            anomaly=anomaly,
            cooldown_remaining=st.cooldown,
        )
        st.last_decision = decision
        return decision

    def run(self, samples: Sequence[JointState], control_every: int = 1) -> list[Decision]:
        """Step through a whole stream with the queue assumed non-empty."""
        return [self.step(s, False, i % control_every == 0) for i, s in enumerate(samples)]

    def memory_bytes(self) -> int:
        """Bytes held by the statistics buffers (the only state that grows with config)."""
        st = self.state
        return st.acc_window.nbytes() + st.tau_window.nbytes() + st.tv_window.nbytes()
