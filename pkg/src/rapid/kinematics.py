"""Per-step kinematic and kinetic scores computed from proprioceptive samples.

Everything here is a pure function over immutable samples. The hot path
works on plain tuples of floats because the dispatcher calls it at sensor
rate (hundreds of Hz) for a handful of joints, where numpy call overhead
would dominate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from rapid.errors import ConfigError, ContractError, DimensionError, SequencingError, TimingError

Vector = tuple[float, ...]

# Accepted band for the measured sampling interval, as a multiple of nominal.
DT_BAND = (0.25, 4.0)


def _as_vector(values: Sequence[float], name: str) -> Vector:
    vec = tuple(float(v) for v in values)
    if not all(math.isfinite(v) for v in vec):
        raise ContractError(f"{name} contains a non-finite value")
    return vec


@dataclass(frozen=True, slots=True)
class JointState:
    """One timestamped proprioceptive sample for an N-joint arm.

    ``t`` is the sensor-tick index and ``time_s`` the timestamp in seconds.
    ``phase`` is an optional ground-truth label carried through from
    generated or replayed streams; nothing in the trigger path reads it.
    """

    t: int
    time_s: float
    q: Vector
    qdot: Vector
    tau: Vector
    phase: str | None = None

    def __post_init__(self) -> None:
        q = _as_vector(self.q, "q")
        qdot = _as_vector(self.qdot, "qdot")
        tau = _as_vector(self.tau, "tau")
        if not q:
            raise DimensionError("a joint state needs at least one joint")
        if not (len(q) == len(qdot) == len(tau)):
            raise DimensionError(
                f"q, qdot, tau lengths differ: {len(q)}, {len(qdot)}, {len(tau)}"
            )
        if not math.isfinite(self.time_s):
            raise TimingError("time_s must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)
        object.__setattr__(self, "tau", tau)

    @property
    def n_joints(self) -> int:
        return len(self.q)


@dataclass(frozen=True, slots=True)
class WeightProfile:
    """Per-joint weights for the acceleration and torque scores."""

    w_a: Vector
    w_tau: Vector

    def __post_init__(self) -> None:
        w_a = tuple(float(w) for w in self.w_a)
        w_tau = tuple(float(w) for w in self.w_tau)
        if len(w_a) != len(w_tau) or not w_a:
            raise DimensionError("w_a and w_tau must be non-empty and equally long")
        for w in w_a + w_tau:
            if not (math.isfinite(w) and w > 0.0):
                raise ConfigError(f"weights must be positive and finite, got {w!r}")
        object.__setattr__(self, "w_a", w_a)
        object.__setattr__(self, "w_tau", w_tau)

    @classmethod
    def ramp(cls, n_joints: int) -> WeightProfile:
        """Linear ramp ``2j/(N+1)`` for j = 1..N: distal joints count more, mean weight 1."""
        if n_joints < 1:
            raise ConfigError("n_joints must be >= 1")
        w = tuple(2.0 * j / (n_joints + 1) for j in range(1, n_joints + 1))
        return cls(w, w)

    @property
    def n_joints(self) -> int:
        return len(self.w_a)


@dataclass(frozen=True, slots=True)
class KinematicSample:
    t: int
    qddot: Vector
    dtau: Vector
    m_acc: float
    tv: float
    v: float
    # finite-difference interval actually used, seconds
    dt: float = field(default=0.0)


def finite_difference_accel(
    prev: JointState, cur: JointState, nominal_dt: float | None = None
) -> Vector:
    """Backward-difference joint accelerations between two consecutive samples.

    With ``nominal_dt`` given, the measured interval must lie within
    ``DT_BAND`` times nominal; jitter outside that band is rejected rather
    than amplified into a spurious acceleration spike.
    """
    if cur.t != prev.t + 1:
        raise SequencingError(f"expected step {prev.t + 1}, got {cur.t}")
    dt = cur.time_s - prev.time_s
    if not dt > 0.0:
        raise TimingError(f"non-increasing timestamps at step {cur.t} (dt={dt!r})")
    if nominal_dt is not None:
        lo, hi = DT_BAND
        if not (lo * nominal_dt <= dt <= hi * nominal_dt):
            raise TimingError(
                f"dt={dt:.6g}s at step {cur.t} outside [{lo}, {hi}] x nominal {nominal_dt:.6g}s"
            )
    if len(cur.qdot) != len(prev.qdot):
        raise DimensionError("joint count changed mid-stream")
    return tuple((b - a) / dt for a, b in zip(prev.qdot, cur.qdot))


def _weights(w: WeightProfile | Sequence[float], attr: str) -> Sequence[float]:
    return getattr(w, attr) if isinstance(w, WeightProfile) else w


def accel_magnitude(qddot: Sequence[float], w: WeightProfile | Sequence[float]) -> float:
    """Weighted L2 norm ``sqrt(sum((w_a[j] * qddot[j])**2))``."""
    wa = _weights(w, "w_a")
    if len(wa) != len(qddot):
        raise DimensionError(f"{len(qddot)} accelerations but {len(wa)} weights")
    acc = 0.0
    for wj, aj in zip(wa, qddot):
        x = wj * aj
        acc += x * x
    return math.sqrt(acc)


def torque_variation(
    prev_tau: Sequence[float], cur_tau: Sequence[float], w: WeightProfile | Sequence[float]
) -> float:
    """Weighted squared magnitude of the torque step, ``sum((w_tau[j] * dtau[j])**2)``."""
    wt = _weights(w, "w_tau")
    if not (len(wt) == len(prev_tau) == len(cur_tau)):
        raise DimensionError(
            f"torque lengths {len(prev_tau)}, {len(cur_tau)} vs {len(wt)} weights"
        )
    acc = 0.0
    for wj, a, b in zip(wt, prev_tau, cur_tau):
        x = wj * (b - a)
        acc += x * x
    return acc


def joint_speed(qdot: Sequence[float]) -> float:
    """Unweighted Euclidean norm of the joint velocity vector."""
    acc = 0.0
    for v in qdot:
        if not math.isfinite(v):
            raise ContractError("qdot contains a non-finite value")
        acc += v * v
    return math.sqrt(acc)


def kinematic_sample(
    prev: JointState,
    cur: JointState,
    weights: WeightProfile,
    nominal_dt: float | None = None,
) -> KinematicSample:
    """All per-step scores for ``cur`` given its predecessor."""
    if weights.n_joints != cur.n_joints:
        raise DimensionError(
            f"weight profile has {weights.n_joints} joints, stream has {cur.n_joints}"
        )
    qddot = finite_difference_accel(prev, cur, nominal_dt)
    dtau = tuple(b - a for a, b in zip(prev.tau, cur.tau))
    return KinematicSample(
        t=cur.t,
        qddot=qddot,
        dtau=dtau,
        m_acc=accel_magnitude(qddot, weights.w_a),
        tv=torque_variation(prev.tau, cur.tau, weights.w_tau),
        v=joint_speed(cur.qdot),
        dt=cur.time_s - prev.time_s,
    )
