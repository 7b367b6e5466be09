"""Little-endian, length-prefixed request/response framing for the inference service.

Every message travels as ``u32 body_length`` followed by the body. Bodies:

request   u32 magic | u16 version | u64 seq | u64 step | u32 payload_len | payload
response  u32 magic | u16 version | u16 status | u64 seq | ...
    status 0:  u32 k | u32 n_joints | u32 bins | f64[k*n_joints] | f64[k*bins]
    status >0: u32 msg_len | utf-8 message

See PROTOCOL.md for the byte-level description.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from rapid.errors import ProtocolError, VersionMismatch

MAGIC = 0x52415044
VERSION = 1
MAX_BODY = 64 * 1024 * 1024

STATUS_OK = 0
STATUS_PROTOCOL_ERROR = 1
STATUS_VERSION_REJECTED = 2

_LEN = struct.Struct("<I")
_REQ_HEAD = struct.Struct("<IHQQI")
_RESP_HEAD = struct.Struct("<IHHQ")
_RESP_DIMS = struct.Struct("<III")


@dataclass(frozen=True)
class InferenceRequest:
    seq: int
    step: int
    payload: bytes
    version: int = VERSION


@dataclass(frozen=True, eq=False)
class InferenceResponse:
    seq: int
    actions: np.ndarray  # (k, n_joints)
    logits: np.ndarray  # (k, bins)
    version: int = VERSION

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InferenceResponse):
            return NotImplemented
        return (
            self.seq == other.seq
            and self.version == other.version
            and self.actions.shape == other.actions.shape
            and self.logits.shape == other.logits.shape
            and self.actions.tobytes() == other.actions.tobytes()
            and self.logits.tobytes() == other.logits.tobytes()
        )


@dataclass(frozen=True)
class ErrorResponse:
    seq: int
    status: int
    message: str
    version: int = VERSION


def encode_request(req: InferenceRequest) -> bytes:
    return _REQ_HEAD.pack(MAGIC, req.version, req.seq, req.step, len(req.payload)) + req.payload


def decode_request(body: bytes) -> InferenceRequest:
    if len(body) < _REQ_HEAD.size:
        raise ProtocolError(f"request truncated: {len(body)} bytes, header needs {_REQ_HEAD.size}")
    magic, version, seq, step, n = _REQ_HEAD.unpack_from(body)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic 0x{magic:08x}")
    if version != VERSION:
        raise VersionMismatch(f"request version {version}, server speaks {VERSION}")
    if len(body) != _REQ_HEAD.size + n:
        raise ProtocolError(f"payload length {n} disagrees with body size {len(body)}")
    return InferenceRequest(seq=seq, step=step, payload=bytes(body[_REQ_HEAD.size :]), version=version)


def encode_response(resp: InferenceResponse | ErrorResponse) -> bytes:
    if isinstance(resp, ErrorResponse):
        msg = resp.message.encode("utf-8")
        return _RESP_HEAD.pack(MAGIC, resp.version, resp.status, resp.seq) + _LEN.pack(len(msg)) + msg
    actions = np.ascontiguousarray(resp.actions, dtype="<f8")
    logits = np.ascontiguousarray(resp.logits, dtype="<f8")
    if actions.ndim != 2 or logits.ndim != 2 or actions.shape[0] != logits.shape[0]:
        raise ProtocolError("actions and logits must be 2-D with the same number of rows")
    k, n = actions.shape
    return (
        _RESP_HEAD.pack(MAGIC, resp.version, STATUS_OK, resp.seq)
        + _RESP_DIMS.pack(k, n, logits.shape[1])
        + actions.tobytes()
        + logits.tobytes()
    )


def decode_response(body: bytes) -> InferenceResponse | ErrorResponse:
    if len(body) < _RESP_HEAD.size:
        raise ProtocolError(f"response truncated: {len(body)} bytes")
    magic, version, status, seq = _RESP_HEAD.unpack_from(body)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic 0x{magic:08x}")
    if version != VERSION:
        raise VersionMismatch(f"response version {version}, client speaks {VERSION}")
    off = _RESP_HEAD.size
    if status != STATUS_OK:
        if len(body) < off + _LEN.size:
            raise ProtocolError("error frame truncated")
        (n,) = _LEN.unpack_from(body, off)
        off += _LEN.size
        if len(body) != off + n:
            raise ProtocolError("error message length disagrees with body size")
        try:
            message = bytes(body[off:]).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError("error message is not utf-8") from exc
        return ErrorResponse(seq=seq, status=status, message=message, version=version)
    if len(body) < off + _RESP_DIMS.size:
        raise ProtocolError("response dimensions truncated")
    k, n, bins = _RESP_DIMS.unpack_from(body, off)
    off += _RESP_DIMS.size
    if k < 1 or n < 1 or bins < 1:
        raise ProtocolError(f"degenerate response dimensions k={k} n={n} bins={bins}")
    expected = off + 8 * (k * n + k * bins)
    if len(body) != expected:
        raise ProtocolError(f"response body is {len(body)} bytes, dimensions imply {expected}")
    actions = np.frombuffer(body, dtype="<f8", count=k * n, offset=off).reshape(k, n)
    logits = np.frombuffer(body, dtype="<f8", count=k * bins, offset=off + 8 * k * n).reshape(k, bins)
    if not (np.all(np.isfinite(actions)) and np.all(np.isfinite(logits))):
        raise ProtocolError("response carries non-finite values")
    return InferenceResponse(seq=seq, actions=actions.copy(), logits=logits.copy(), version=version)


def frame(body: bytes) -> bytes:
    if len(body) > MAX_BODY:
        raise ProtocolError(f"body of {len(body)} bytes exceeds limit {MAX_BODY}")
    return _LEN.pack(len(body)) + body


def unframe(data: bytes) -> bytes:
    """Strip the length prefix from one complete frame held in memory."""
    if len(data) < _LEN.size:
        raise ProtocolError("frame shorter than its length prefix")
    (n,) = _LEN.unpack_from(data)
    if len(data) != _LEN.size + n:
        raise ProtocolError(f"frame declares {n} body bytes, carries {len(data) - _LEN.size}")
    return bytes(data[_LEN.size :])


def read_frame(stream: BinaryIO) -> bytes | None:
    """Read one body from a stream; ``None`` on clean EOF between frames."""
    head = stream.read(_LEN.size)
    if not head:
        return None
    if len(head) < _LEN.size:
        raise ProtocolError("connection closed inside a length prefix")
    (n,) = _LEN.unpack(head)
    if n > MAX_BODY:
        raise ProtocolError(f"declared body of {n} bytes exceeds limit {MAX_BODY}")
    body = stream.read(n)
    if len(body) < n:
        raise ProtocolError(f"connection closed after {len(body)} of {n} body bytes")
    return body


def write_frame(stream: BinaryIO, body: bytes) -> None:
    stream.write(frame(body))
    stream.flush()
