"""Seeded latency model: fixed service time, uniform jitter, linear transfer cost."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rapid.errors import ConfigError


@dataclass(frozen=True)
class LatencyModel:
    base_ms: float
    jitter_ms: float = 0.0
    bandwidth_mbps: float = math.inf
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.base_ms) and self.base_ms >= 0):
            raise ConfigError(f"base_ms must be finite and >= 0, got {self.base_ms}")
        if not (math.isfinite(self.jitter_ms) and self.jitter_ms >= 0):
            raise ConfigError(f"jitter_ms must be finite and >= 0, got {self.jitter_ms}")
        if not self.bandwidth_mbps > 0:
            raise ConfigError(f"bandwidth_mbps must be positive, got {self.bandwidth_mbps}")

    def transfer_ms(self, payload_bytes: int) -> float:
        if math.isinf(self.bandwidth_mbps):
            return 0.0
        return payload_bytes * 8.0 / (self.bandwidth_mbps * 1e6) * 1e3

    def sample(self, index: int, payload_bytes: int = 0, compute_share: float = 1.0) -> float:
        """Latency in ms of call number ``index``; the same index always gives the same value.

        ``compute_share`` scales the service-time part (base and jitter) for
        callers that only run a fraction of the model on this side.
        """
        jitter = 0.0
        if self.jitter_ms > 0:
            jitter = float(np.random.default_rng([self.seed, index]).uniform(-self.jitter_ms, self.jitter_ms))
        compute = max(self.base_ms + jitter, 0.0) * compute_share
        return compute + self.transfer_ms(payload_bytes)

    def mean_ms(self, payload_bytes: int = 0, compute_share: float = 1.0) -> float:
        return self.base_ms * compute_share + self.transfer_ms(payload_bytes)
