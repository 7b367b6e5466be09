"""Brute-force reference implementations used as test oracles.

Nothing here shares code with the package: every statistic is recomputed
from the full raw history on every tick, with two-pass numpy formulas.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


def window_stats(history: list[float], capacity: int) -> tuple[int, float, float]:
    """``(count, mean, population std)`` of the last ``capacity`` values."""
    tail = np.asarray(history[-capacity:], dtype=np.float64)
    if tail.size == 0:
        return 0, 0.0, 0.0
    mu = float(tail.mean())
    return tail.size, mu, float(np.sqrt(np.mean((tail - mu) ** 2)))


def zscore(history: list[float], capacity: int, x: float, eps: float) -> float:
    n, mu, sd = window_stats(history, capacity)
    if n < 2:
        return 0.0
    return (x - mu) / (sd + eps)


@dataclass
class RefDecision:
    t: int
    m_acc: float
    m_tau: float
    m_acc_hat: float
    m_tau_hat: float
    omega_a: float
    trigger: bool
    flag: bool
    dispatch: bool
    cooldown: int


def trailing_stats(series: np.ndarray, capacity: int, *, exclude_current: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-index ``(count, mean, population std)`` of a trailing window, each window summed from scratch.

    With ``exclude_current`` the window for index ``i`` ends at ``i - 1``.
    """
    pad = capacity if exclude_current else capacity - 1
    x = np.concatenate([np.full(pad, np.nan), series])
    if exclude_current:
        x = x[:-1]
    win = np.lib.stride_tricks.sliding_window_view(x, capacity)
    count = np.sum(~np.isnan(win), axis=1)
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mu = np.nanmean(win, axis=1)
        sd = np.sqrt(np.nanmean((win - mu[:, None]) ** 2, axis=1))
    return count, np.nan_to_num(mu), np.nan_to_num(sd)


def reference_decisions(
    t: np.ndarray,
    time_s: np.ndarray,
    qdot: np.ndarray,
    tau: np.ndarray,
    w_a: np.ndarray,
    w_tau: np.ndarray,
    *,
    v_max: float,
    theta_comp: float,
    theta_red: float,
    cooldown_steps: int,
    eps: float,
    w_a_len: int,
    w_tau_len: int,
    w_tau_stats_len: int,
    control_every: int,
    queue_empty: np.ndarray,
) -> list[RefDecision]:
    """Run the dual-threshold dispatcher the slow way over a whole stream.

    Every window statistic is recomputed from the raw history for each tick
    (vectorised across ticks, never updated incrementally). Only the latch
    and cooldown, which are inherently sequential, run in a loop.
    ``queue_empty[i]`` is only read on control ticks (``i % control_every == 0``).
    """
    n = len(t)
    dt = np.diff(time_s)
    qdd = np.diff(qdot, axis=0) / dt[:, None]
    m_acc = np.concatenate([[0.0], np.sqrt(np.sum((w_a * qdd) ** 2, axis=1))])
    tv = np.sum((w_tau * np.diff(tau, axis=0)) ** 2, axis=1)
    _, tv_mean, _ = trailing_stats(tv, w_tau_len, exclude_current=False)
    m_tau = np.concatenate([[0.0], tv_mean])

    def z(series: np.ndarray, cap: int) -> np.ndarray:
        cnt, mu, sd = trailing_stats(series[1:], cap, exclude_current=True)
        out = np.where(cnt >= 2, (series[1:] - mu) / (sd + eps), 0.0)
        return np.concatenate([[0.0], out])

    za = z(m_acc, w_a_len)
    zt = z(m_tau, w_tau_stats_len)
    omega_a = np.clip(np.sqrt(np.sum(qdot**2, axis=1)) / v_max, 0.0, 1.0)
    scored = np.arange(n)  # values pushed into the acc history after tick i
    warmup = max(w_a_len, w_tau_len, w_tau_stats_len)
    trig = (scored > warmup) & ((omega_a * za > theta_comp) | ((1.0 - omega_a) * zt > theta_red))

    out = []
    c = 0
    latch = False
    for i in range(n):
        latch = latch or bool(trig[i])
        flag = dispatch = False
        if i % control_every == 0:
            flag = latch
            latch = False
            dispatch = (flag and c == 0) or bool(queue_empty[i])
            c = cooldown_steps if (dispatch and flag) else max(c - 1, 0)
        out.append(RefDecision(int(t[i]), float(m_acc[i]), float(m_tau[i]), float(za[i]), float(zt[i]),
                               float(omega_a[i]), bool(trig[i]), flag, dispatch, c))
    return out


def naive_cooldown(triggers: list[bool], C: int) -> list[bool]:
    """Dispatch pattern of a trigger sequence under a C-tick cooldown, one tick at a time."""
    out = []
    last = None
    for k, trig in enumerate(triggers):
        ok = trig and (last is None or k - last > C)
        out.append(ok)
        if ok:
            last = k
    return out


def reference_stream(seed: int, n_joints: int, n_ticks: int, dt: float = 0.002) -> dict[str, np.ndarray]:
    """Random-walk joint velocities with jumps and torque steps, so every branch gets exercised."""
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal((n_ticks, n_joints)) * 0.02
    jumps = (rng.random((n_ticks, 1)) < 0.01) * rng.standard_normal((n_ticks, n_joints)) * 0.5
    qdot = np.cumsum(steps + jumps, axis=0) * rng.uniform(0.2, 2.0)
    tau_steps = (rng.random((n_ticks, 1)) < 0.02) * rng.standard_normal((n_ticks, n_joints))
    tau = np.cumsum(tau_steps + 0.001 * rng.standard_normal((n_ticks, n_joints)), axis=0)
    jitter = rng.uniform(0.9, 1.1, size=n_ticks) * dt
    time_s = np.concatenate([[0.0], np.cumsum(jitter[1:])])
    return {"t": np.arange(n_ticks), "time_s": time_s, "qdot": qdot, "tau": tau, "q": np.cumsum(qdot * dt, axis=0)}


def isclose(a: float, b: float, tol: float = 1e-9) -> bool:
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)
