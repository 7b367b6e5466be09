"""Deterministic stand-in for the cloud action model, plus entropy helpers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from rapid.cloud import protocol
from rapid.errors import ContractError, ProtocolError, VersionMismatch

log = logging.getLogger(__name__)

LOG2E = 1.0 / math.log(2.0)


def shannon_entropy(probabilities) -> float:
    """Entropy in bits, with ``0 * log 0 = 0``."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ContractError("expected a non-empty 1-D distribution")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ContractError("probabilities must be finite and non-negative")
    total = math.fsum(p)
    if abs(total - 1.0) > 1e-9:
        raise ContractError(f"probabilities sum to {total!r}, not 1")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logit_entropy(logits: np.ndarray) -> np.ndarray:
    """Row-wise entropy (bits) of softmax(logits), computed without forming log(0)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    p = np.exp(z - lse[..., None])
    # H = log Z - E_p[z] in nats
    return (lse - (p * z).sum(axis=-1)) * LOG2E


def estimate_noise(payload: bytes) -> float:
    """Fraction of corrupted bytes in a camera payload, estimated blind.

    Clean frames are smooth (neighbouring bytes differ by at most one), so
    a jump larger than one between neighbours means at least one of the two
    bytes was replaced by noise. Inverting ``P(jump) = (1 - (1-p)^2)(1 - 3/256)``
    gives the corruption rate.
    """
    a = np.frombuffer(payload, dtype=np.uint8)
    if a.size < 2:
        return 0.0
    jumps = np.count_nonzero(np.abs(np.diff(a.astype(np.int16))) > 1)
    frac = jumps / (a.size - 1)
    frac = min(frac / (1.0 - 3.0 / 256.0), 1.0)
    return float(min(max(1.0 - math.sqrt(1.0 - frac), 0.0), 1.0))


@dataclass
class MockVLA:
    """Seeded chunk generator answering inference requests.

    Actions depend only on ``(seed, step)``. Logit sharpness falls with the
    estimated corruption of the observation, so noisier frames give flatter
    (higher-entropy) action distributions:

        sharpness = base_sharpness * exp(difficulty_spread * u - noise_flattening * noise)

    with ``u`` uniform in [-1, 1] per request.
    """

    n_joints: int
    horizon: int = 8
    bins: int = 256
    seed: int = 0
    base_sharpness: float = 2.64
    difficulty_spread: float = 0.5
    noise_flattening: float = 1.6
    action_scale: float = 0.05

    def __post_init__(self) -> None:
        if self.n_joints < 1 or self.horizon < 1 or self.bins < 2:
            raise ContractError("n_joints, horizon must be >= 1 and bins >= 2")

    def sharpness(self, step: int, noise: float) -> float:
        u = np.random.default_rng([self.seed, step, 1]).uniform(-1.0, 1.0)
        return self.base_sharpness * math.exp(self.difficulty_spread * u - self.noise_flattening * noise)

    def infer(self, step: int, payload: bytes) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(actions[k, n_joints], logits[k, bins])`` for an observation."""
        rng = np.random.default_rng([self.seed, step, 0])
        actions = self.action_scale * np.cumsum(rng.standard_normal((self.horizon, self.n_joints)), axis=0)
        z = rng.standard_normal((self.horizon, self.bins))
        logits = self.sharpness(step, estimate_noise(payload)) * z
        return actions, logits

    def handle(self, request: protocol.InferenceRequest) -> protocol.InferenceResponse:
        actions, logits = self.infer(request.step, request.payload)
        return protocol.InferenceResponse(seq=request.seq, actions=actions, logits=logits)

    def serve(self, body: bytes) -> bytes:
        """Answer one request body with one response body; never raises on bad input."""
        try:
            req = protocol.decode_request(body)
        except VersionMismatch as exc:
            return protocol.encode_response(
                protocol.ErrorResponse(_peek_seq(body), protocol.STATUS_VERSION_REJECTED, str(exc))
            )
        except ProtocolError as exc:
            log.debug("rejecting malformed request: %s", exc)
            return protocol.encode_response(
                protocol.ErrorResponse(_peek_seq(body), protocol.STATUS_PROTOCOL_ERROR, str(exc))
            )
        return protocol.encode_response(self.handle(req))


def _peek_seq(body: bytes) -> int:
    # best effort: echo the sequence number if the header got that far
    if len(body) >= 14:
        return int.from_bytes(body[6:14], "little")
    return 0
