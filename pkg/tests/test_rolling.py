from __future__ import annotations

import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rapid.errors import ConfigError, ContractError
from rapid.rolling import RESYNC_EVERY, ExponentialStats, RollingWindow, moving_average, normalize, push


def brute(values, capacity):
    tail = np.asarray(values[-capacity:], dtype=float)
    mu = tail.mean()
    return mu, math.sqrt(np.mean((tail - mu) ** 2))


def test_push_examples():
    w = push(RollingWindow(4), 5.0)
    assert w.count == 1 and w.mean == 5.0
    w = RollingWindow(2)
    for x in (1.0, 2.0, 3.0):
        w.push(x)
    assert w.values() == (2.0, 3.0) and w.mean == 2.5


@pytest.mark.parametrize("bad", [math.nan, math.inf])
def test_push_rejects_non_finite(bad):
    w = RollingWindow(3)
    with pytest.raises(ContractError):
        w.push(bad)
    assert w.count == 0


def test_capacity_validated():
    with pytest.raises(ConfigError):
        RollingWindow(0)


def test_normalize_examples():
    w = RollingWindow(4)
    for _ in range(4):
        w.push(3.0)
    assert normalize(w, 3.0, 1e-6).z == 0.0
    z = RollingWindow(4)
    for _ in range(4):
        z.push(0.0)
    assert normalize(z, 1.0, 1e-6).z == pytest.approx(1e6, rel=1e-12)
    empty = normalize(RollingWindow(4), 42.0, 1e-6)
    assert (empty.z, empty.mean, empty.std) == (0.0, 42.0, 0.0)


def test_normalize_single_sample_is_warmup():
    w = RollingWindow(4)
    w.push(1.0)
    assert normalize(w, 10.0, 1e-6).z == 0.0


def test_normalize_rejects_bad_eps():
    with pytest.raises(ConfigError):
        normalize(RollingWindow(2), 1.0, 0.0)


def test_normalize_shift_equivariant():
    rng = np.random.default_rng(1)
    w = RollingWindow(50)
    for x in rng.standard_normal(80):
        w.push(float(x))
    a, b = normalize(w, 0.3, 1e-6), normalize(w, 0.3 + 2.0, 1e-6)
    assert b.z - a.z == pytest.approx(2.0 / (a.std + 1e-6), rel=1e-12)


def test_moving_average_examples():
    w = RollingWindow(2)
    assert moving_average(w) == 0.0
    w.push(7.0)
    assert moving_average(w) == 7.0
    w.push(1.0)
    w.push(3.0)
    assert moving_average(w) == 2.0
    zeros = RollingWindow(3)
    for _ in range(5):
        zeros.push(0.0)
    assert zeros.moving_average() == 0.0


def test_running_sums_match_ring():
    rng = np.random.default_rng(2)
    w = RollingWindow(37)
    for x in rng.normal(1e3, 5.0, 500):
        w.push(float(x))
        vals = np.array(w.values())
        assert w.running_sum == pytest.approx(vals.sum(), rel=1e-9)
        assert w.running_sumsq == pytest.approx(np.sum(vals**2), rel=1e-9)
        assert 0 <= w.count <= w.capacity


def test_incremental_matches_recompute_over_1e5_pushes():
    rng = np.random.default_rng(7)
    n = 100_000
    # offsets, heavy outliers and slow drift in one stream
    xs = rng.standard_normal(n) * np.where(rng.random(n) < 0.01, 1e3, 1.0) + np.linspace(0, 50, n)
    for cap in (1, 2, 33, 250):
        w = RollingWindow(cap)
        ring = []
        for i, x in enumerate(xs.tolist()):
            w.push(x)
            ring.append(x)
            if len(ring) > cap:
                ring.pop(0)
            if i % 7 == 0 or i > n - 50:
                tail = np.asarray(ring)
                mu = tail.mean()
                sd = math.sqrt(np.mean((tail - mu) ** 2))
                assert abs(w.mean - mu) < 1e-9 and abs(w.std - sd) < 1e-9, (cap, i)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=300),
    st.integers(1, 40),
)
def test_window_property(values, cap):
    w = RollingWindow(cap, resync_every=17)
    for i, x in enumerate(values):
        w.push(x)
        mu, sd = brute(values[: i + 1], cap)
        scale = max(1.0, max(abs(v) for v in values[max(0, i + 1 - cap) : i + 1]))
        assert abs(w.mean - mu) <= 1e-9 * scale
        assert abs(w.std - sd) <= 1e-6 * scale
        assert w.variance >= 0


def test_quiet_after_spike_keeps_precision():
    # large values leave the window, tiny ones with a tiny spread remain
    rng = np.random.default_rng(5)
    xs = np.concatenate([rng.uniform(0.5, 2.0, 100), 9e-6 + 1e-7 * rng.standard_normal(600)])
    w = RollingWindow(200)
    for i, x in enumerate(xs.tolist()):
        w.push(x)
        mu, sd = brute(xs[: i + 1].tolist(), 200)
        if i >= 300:
            assert w.mean == pytest.approx(mu, rel=1e-12)
            assert w.std == pytest.approx(sd, rel=1e-9)


def test_variance_never_negative_on_constant_stream():
    w = RollingWindow(10)
    for _ in range(10_000):
        w.push(0.1)
        assert w.variance >= 0.0 and w.std == pytest.approx(0.0, abs=1e-12)


def test_resync_keeps_values():
    w = RollingWindow(5, resync_every=RESYNC_EVERY)
    for x in range(1, 9):
        w.push(float(x))
    before = (w.mean, w.variance)
    w.resync()
    assert (w.mean, w.variance) == pytest.approx(before, rel=1e-15)


def test_memory_is_bounded_by_capacity():
    w = RollingWindow(100)
    for x in range(10_000):
        w.push(float(x))
    assert w.nbytes() == 100 * 8
    assert sys.getsizeof(w._ring) < 100 * 8 + 200


class TestExponential:
    def test_constant_stream(self):
        e = ExponentialStats(0.9)
        for _ in range(100):
            e.push(2.0)
        assert e.mean == pytest.approx(2.0) and e.std == pytest.approx(0.0, abs=1e-12)

    def test_tracks_level_shift(self):
        e = ExponentialStats(0.9)
        for _ in range(200):
            e.push(0.0)
        for _ in range(200):
            e.push(10.0)
        assert e.mean == pytest.approx(10.0, abs=1e-6)

    def test_normalize_interface(self):
        e = ExponentialStats(0.5)
        assert e.normalize(3.0, 1e-6).z == 0.0
        e.push(0.0)
        e.push(1.0)
        assert e.normalize(1.0, 1e-6).z > 0

    @pytest.mark.parametrize("decay", [0.0, 1.0, -0.5])
    def test_decay_validated(self, decay):
        with pytest.raises(ConfigError):
            ExponentialStats(decay)
