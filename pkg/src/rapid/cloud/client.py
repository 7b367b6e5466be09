"""Client side of the inference link and the two transports it can run over."""

from __future__ import annotations

import logging
import socket
import time
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING

from rapid.chunks import ActionChunk, ChunkSource
from rapid.cloud import protocol
from rapid.cloud.latency import LatencyModel
from rapid.cloud.service import MockVLA
from rapid.errors import CloudTimeout, ProtocolError

if TYPE_CHECKING:
    from rapid.sim.observation import ObservationBlob

log = logging.getLogger(__name__)


class InProcessTransport:
    """Hands request bodies straight to a service object; no sockets, same codec."""

    def __init__(self, service: MockVLA) -> None:
        self.service = service
        self._inbox: deque[bytes] = deque()

    def send(self, body: bytes) -> None:
        self._inbox.append(self.service.serve(body))

    def recv(self) -> bytes:
        if not self._inbox:
            raise TimeoutError("no response pending")
        return self._inbox.popleft()

    def close(self) -> None:
        self._inbox.clear()


class SocketTransport:
    """Blocking TCP connection to a :mod:`rapid.cloud.server` instance."""

    def __init__(self, host: str, port: int, timeout_s: float = 2.0) -> None:
        self.address = (host, port)
        self.timeout_s = timeout_s
        self._sock: socket.socket | None = None
        self._file = None

    def _connect(self) -> None:
        self._sock = socket.create_connection(self.address, timeout=self.timeout_s)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._file = self._sock.makefile("rwb")

    def send(self, body: bytes) -> None:
        if self._file is None:
            self._connect()
        protocol.write_frame(self._file, body)

    def recv(self) -> bytes:
        if self._file is None:
            raise ProtocolError("not connected")
        try:
            body = protocol.read_frame(self._file)
        except socket.timeout as exc:
            raise TimeoutError(str(exc)) from exc
        if body is None:
            self.close()
            raise ProtocolError("server closed the connection")
        return body

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
        if self._sock is not None:
            self._sock.close()
        self._file = self._sock = None

    def __enter__(self) -> SocketTransport:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass(frozen=True)
class ChunkReply:
    chunk: ActionChunk
    latency_ms: float
    logits: object  # np.ndarray (k, bins)
    attempts: int


class CloudClient:
    """Frames observations, sends them, and turns answers into action chunks.

    With a :class:`LatencyModel` the reported latency is simulated (and a
    sampled latency above ``timeout_ms`` counts as a timeout); without one
    it is wall-clock time around the round trip.
    """

    def __init__(
        self,
        transport,
        latency: LatencyModel | None = None,
        timeout_ms: float = 2000.0,
        retries: int = 1,
        source: ChunkSource = ChunkSource.CLOUD,
    ) -> None:
        self.transport = transport
        self.latency = latency
        self.timeout_ms = timeout_ms
        self.retries = retries
        self.source = source
        self.next_seq = 1
        self.calls = 0
        self.timeouts = 0
        self.dropped = 0

    def request_chunk(self, obs: ObservationBlob, compute_share: float = 1.0) -> ChunkReply:
        spent = 0.0
        for attempt in range(1, self.retries + 2):
            seq = self.next_seq
            self.next_seq += 1
            try:
                resp, latency = self._roundtrip(seq, obs, compute_share)
            except TimeoutError:
                self.timeouts += 1
                spent += self.timeout_ms
                log.info("request seq=%d step=%d timed out (attempt %d)", seq, obs.step, attempt)
                continue
            chunk = ActionChunk(origin_step=obs.step, actions=resp.actions, source=self.source, seq=seq)
            return ChunkReply(chunk=chunk, latency_ms=spent + latency, logits=resp.logits, attempts=attempt)
        raise CloudTimeout(f"no answer for step {obs.step} after {self.retries + 1} attempts ({spent:.1f} ms)")

    def _roundtrip(self, seq: int, obs: ObservationBlob, share: float):
        body = protocol.encode_request(protocol.InferenceRequest(seq=seq, step=obs.step, payload=obs.payload))
        index = self.calls
        self.calls += 1
        t0 = time.perf_counter()
        self.transport.send(body)
        while True:
            resp = protocol.decode_response(self.transport.recv())
            if resp.seq == seq:
                break
            self.dropped += 1
            log.debug("dropping response seq=%d while waiting for %d", resp.seq, seq)
        wall_ms = (time.perf_counter() - t0) * 1e3
        if isinstance(resp, protocol.ErrorResponse):
            raise ProtocolError(f"server rejected seq={seq}: {resp.message}")
        if self.latency is None:
            return resp, wall_ms
        latency = self.latency.sample(index, len(obs.payload), share)
        if latency > self.timeout_ms:
            raise TimeoutError(f"simulated latency {latency:.1f} ms exceeds timeout")
        return resp, latency
