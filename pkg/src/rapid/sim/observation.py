"""Synthetic camera observations with byte-level corruption."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rapid.errors import ConfigError

DEFAULT_OBS_BYTES = 224 * 224 * 3
_STRIPE = 64  # bytes per gradient step; keeps neighbours within 1 of each other


@dataclass(frozen=True)
class ObservationBlob:
    step: int
    payload: bytes
    noise_level: float = 0.0

    def __len__(self) -> int:
        return len(self.payload)


def clean_frame(step: int, size: int = DEFAULT_OBS_BYTES) -> np.ndarray:
    """A smooth byte ramp that drifts with ``step``; adjacent bytes differ by at most 1."""
    x = (np.arange(size, dtype=np.int64) // _STRIPE + step) % 510
    return np.where(x <= 255, x, 510 - x).astype(np.uint8)


def make_observation(step: int, noise_level: float = 0.0, size: int = DEFAULT_OBS_BYTES, seed: int = 0) -> ObservationBlob:
    """Frame for control tick ``step``; each byte is replaced by a random one with probability ``noise_level``."""
    if not 0.0 <= noise_level <= 1.0:
        raise ConfigError(f"noise_level must lie in [0, 1], got {noise_level}")
    if size < 0:
        raise ConfigError("observation size must be >= 0")
    frame = clean_frame(step, size)
    if noise_level > 0.0 and size:
        rng = np.random.default_rng([seed, step, round(noise_level * 1_000_000)])
        hit = rng.random(size) < noise_level
        frame[hit] = rng.integers(0, 256, size=int(hit.sum()), dtype=np.uint8)
    return ObservationBlob(step=step, payload=frame.tobytes(), noise_level=noise_level)
