"""Constant-time sliding-window statistics and z-score normalization."""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass

from rapid.errors import ConfigError, ContractError

RESYNC_EVERY = 4096
RECENTER_SIGMAS = 100.0
_RECENTER_RATIO = RECENTER_SIGMAS * RECENTER_SIGMAS


@dataclass(frozen=True, slots=True)
class NormalizedScore:
    raw: float
    mean: float
    std: float
    z: float


class RollingWindow:
    """Fixed-capacity ring buffer with O(1) mean and population variance.

    Sums are kept relative to a shift value (the window mean at the last
    resync), which keeps ``E[x^2] - E[x]^2`` well conditioned when values
    sit far from zero. Each sum carries a compensation term (Knuth's
    two-sum), so a large value entering and later leaving the window
    cancels almost exactly instead of leaving rounding residue behind.
    Every ``resync_every`` pushes the sums are recomputed from the ring. The
    ring is also re-centred whenever the window mean has wandered more than
    ``RECENTER_SIGMAS`` standard deviations from the shift, since past that
    point the variance formula would cancel away most of its digits.
    """

    __slots__ = ("capacity", "count", "_ring", "_head", "_shift", "_s1", "_c1", "_s2", "_c2",
                 "_since_resync", "_resync_every")

    def __init__(self, capacity: int, resync_every: int = RESYNC_EVERY) -> None:
        if capacity < 1:
            raise ConfigError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.count = 0
        self._ring = array("d", bytes(8 * self.capacity))
        self._head = 0  # next write position
        self._shift = 0.0
        self._s1 = self._c1 = 0.0
        self._s2 = self._c2 = 0.0
        self._since_resync = 0
        self._resync_every = resync_every

    def push(self, x: float) -> None:
        if not math.isfinite(x):
            raise ContractError(f"cannot push non-finite value {x!r}")
        if self.count == 0:
            self._shift = x
        d = x - self._shift
        # branchless two-sum (Knuth): t = s + v exactly equals t + err; err goes to c
        s1, c1, s2, c2 = self._s1, self._c1, self._s2, self._c2
        if self.count == self.capacity:
            old = self._ring[self._head] - self._shift
            t = s1 + d
            bp = t - s1
            c1 += (s1 - (t - bp)) + (d - bp)
            s1 = t - old
            bp = s1 - t
            c1 += (t - (s1 - bp)) - (old + bp)
            v, w = d * d, old * old
            t = s2 + v
            bp = t - s2
            c2 += (s2 - (t - bp)) + (v - bp)
            s2 = t - w
            bp = s2 - t
            c2 += (t - (s2 - bp)) - (w + bp)
        else:
            t = s1 + d
            bp = t - s1
            c1 += (s1 - (t - bp)) + (d - bp)
            s1 = t
            v = d * d
            t = s2 + v
            bp = t - s2
            c2 += (s2 - (t - bp)) + (v - bp)
            s2 = t
            self.count += 1
        self._s1, self._c1, self._s2, self._c2 = s1, c1, s2, c2
        self._ring[self._head] = x
        self._head += 1
        if self._head == self.capacity:
            self._head = 0
        self._since_resync += 1
        if self._since_resync >= self._resync_every:
            self.resync()
        elif self.count > 1:
            n = self.count
            m = s1 / n
            if m * m > _RECENTER_RATIO * (s2 / n - m * m):
                self.resync()

    def resync(self) -> None:
        """Recompute the running sums from the ring contents."""
        vals = self.values()
        self._since_resync = 0
        self._c1 = self._c2 = 0.0
        if not vals:
            self._shift = self._s1 = self._s2 = 0.0
            return
        self._shift = math.fsum(vals) / len(vals)
        k = self._shift
        self._s1 = math.fsum(v - k for v in vals)
        self._s2 = math.fsum((v - k) * (v - k) for v in vals)

    def values(self) -> tuple[float, ...]:
        """Held values, oldest first."""
        if self.count < self.capacity:
            return tuple(self._ring[: self.count])
        h = self._head
        return tuple(self._ring[h:]) + tuple(self._ring[:h])

    @property
    def mean(self) -> float:
        if self.count == 0:
            return 0.0
        return self._shift + (self._s1 + self._c1) / self.count

    @property
    def variance(self) -> float:
        """Population variance, clamped at zero."""
        n = self.count
        if n == 0:
            return 0.0
        m = (self._s1 + self._c1) / n
        return max((self._s2 + self._c2) / n - m * m, 0.0)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def running_sum(self) -> float:
        return self._shift * self.count + (self._s1 + self._c1)

    @property
    def running_sumsq(self) -> float:
        k = self._shift
        s1 = self._s1 + self._c1
        return (self._s2 + self._c2) + 2.0 * k * s1 + k * k * self.count

    def normalize(self, x: float, eps: float) -> NormalizedScore:
        return normalize(self, x, eps)

    def moving_average(self) -> float:
        return moving_average(self)

    def snapshot(self) -> tuple[float, ...]:
        return self.values()

    def nbytes(self) -> int:
        return self._ring.itemsize * len(self._ring)

    def __len__(self) -> int:
        return self.count

    def __repr__(self) -> str:
        return f"RollingWindow(capacity={self.capacity}, count={self.count}, mean={self.mean:.6g})"


class ExponentialStats:
    """Exponentially forgetting mean/variance with the same read interface.

    ``decay`` is the per-push retention factor; the effective memory is
    about ``1 / (1 - decay)`` samples.
    """

    __slots__ = ("decay", "count", "_mean", "_var")

    def __init__(self, decay: float) -> None:
        if not 0.0 < decay < 1.0:
            raise ConfigError(f"decay must lie in (0, 1), got {decay}")
        self.decay = decay
        self.count = 0
        self._mean = 0.0
        self._var = 0.0

    def push(self, x: float) -> None:
        if not math.isfinite(x):
            raise ContractError(f"cannot push non-finite value {x!r}")
        if self.count == 0:
            self._mean = x
            self._var = 0.0
        else:
            diff = x - self._mean
            incr = (1.0 - self.decay) * diff
            self._mean += incr
            self._var = self.decay * (self._var + diff * incr)
        self.count += 1

    @property
    def mean(self) -> float:
        return self._mean

    @property
    def variance(self) -> float:
        return max(self._var, 0.0)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def normalize(self, x: float, eps: float) -> NormalizedScore:
        return normalize(self, x, eps)

    def nbytes(self) -> int:
        return 16


def push(window: RollingWindow | ExponentialStats, x: float) -> RollingWindow | ExponentialStats:
    window.push(x)
    return window


def normalize(window: RollingWindow | ExponentialStats, x: float, eps: float) -> NormalizedScore:
    """Score ``x`` against the window's current contents: ``(x - mean) / (std + eps)``.

    With fewer than two samples held there is no spread to speak of, so the
    score is defined as zero.
    """
    if not eps > 0.0:
        raise ConfigError(f"eps must be positive, got {eps}")
    if not math.isfinite(x):
        raise ContractError(f"cannot normalize non-finite value {x!r}")
    if window.count < 2:
        return NormalizedScore(raw=x, mean=x, std=0.0, z=0.0)
    mu = window.mean
    sigma = window.std
    return NormalizedScore(raw=x, mean=mu, std=sigma, z=(x - mu) / (sigma + eps))


def moving_average(window: RollingWindow) -> float:
    """Sum of held values divided by ``max(count, 1)``."""
    if window.count == 0:
        return 0.0
    return window.mean
