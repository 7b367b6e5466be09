"""Single-connection TCP server in front of :class:`MockVLA`."""

from __future__ import annotations

import logging
import socketserver
import threading

from rapid.cloud import protocol
from rapid.cloud.service import MockVLA
from rapid.errors import ProtocolError

log = logging.getLogger(__name__)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        service: MockVLA = self.server.service  # type: ignore[attr-defined]
        peer = self.client_address
        log.info("client %s connected", peer)
        while True:
            try:
                body = protocol.read_frame(self.rfile)
            except ProtocolError as exc:
                log.warning("closing %s: %s", peer, exc)
                return
            if body is None:
                log.info("client %s disconnected", peer)
                return
            protocol.write_frame(self.wfile, service.serve(body))


class CloudServer(socketserver.TCPServer):
    """Serves one connection at a time, which matches the one-request-in-flight client."""

    allow_reuse_address = True

    def __init__(self, host: str, port: int, service: MockVLA) -> None:
        super().__init__((host, port), _Handler)
        self.service = service
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start_background(self) -> CloudServer:
        self._thread = threading.Thread(target=self.serve_forever, name="cloud-server", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> CloudServer:
        return self.start_background()

    def __exit__(self, *exc) -> None:
        self.stop()
