from __future__ import annotations

import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rapid.cloud import protocol as P
from rapid.errors import ProtocolError, VersionMismatch

u64 = st.integers(0, 2**64 - 1)


def test_documented_example_bytes():
    body = P.encode_request(P.InferenceRequest(seq=1, step=2, payload=b"\x01\x02\x03"))
    expected = bytes.fromhex(
        "1d000000"
        "445041520100"
        "0100000000000000"
        "0200000000000000"
        "03000000010203"
    )
    assert P.frame(body) == expected
    assert P.decode_request(P.unframe(expected)) == P.InferenceRequest(1, 2, b"\x01\x02\x03")


@settings(max_examples=300)
@given(u64, u64, st.binary(max_size=2048))
def test_request_roundtrip(seq, step, payload):
    req = P.InferenceRequest(seq, step, payload)
    assert P.decode_request(P.unframe(P.frame(P.encode_request(req)))) == req


@settings(max_examples=200)
@given(u64, st.integers(1, 9), st.integers(1, 8), st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_response_roundtrip(seq, k, n, bins, seed):
    rng = np.random.default_rng(seed)
    resp = P.InferenceResponse(seq, rng.standard_normal((k, n)), rng.standard_normal((k, bins)) * 50)
    out = P.decode_response(P.encode_response(resp))
    assert out == resp and out.horizon == k


@settings(max_examples=100)
@given(u64, st.sampled_from([1, 2, 7]), st.text(max_size=200))
def test_error_roundtrip(seq, status, msg):
    err = P.ErrorResponse(seq, status, msg)
    assert P.decode_response(P.encode_response(err)) == err


class TestRequestRejection:
    good = P.encode_request(P.InferenceRequest(5, 6, b"abcd"))

    def test_truncated_header(self):
        with pytest.raises(ProtocolError):
            P.decode_request(self.good[:10])

    def test_truncated_payload(self):
        with pytest.raises(ProtocolError):
            P.decode_request(self.good[:-1])

    def test_trailing_bytes(self):
        with pytest.raises(ProtocolError):
            P.decode_request(self.good + b"x")

    def test_bad_magic(self):
        with pytest.raises(ProtocolError, match="magic"):
            P.decode_request(b"\x00" + self.good[1:])

    def test_version(self):
        bad = self.good[:4] + struct.pack("<H", 2) + self.good[6:]
        with pytest.raises(VersionMismatch):
            P.decode_request(bad)


class TestResponseRejection:
    resp = P.encode_response(P.InferenceResponse(3, np.ones((2, 2)), np.zeros((2, 4))))

    @pytest.mark.parametrize("cut", [0, 8, 17, 27, -1])
    def test_truncation(self, cut):
        with pytest.raises(ProtocolError):
            P.decode_response(self.resp[:cut])

    def test_degenerate_dims(self):
        body = self.resp[:16] + struct.pack("<III", 0, 2, 4)
        with pytest.raises(ProtocolError, match="degenerate"):
            P.decode_response(body)

    def test_non_finite(self):
        bad = bytearray(self.resp)
        bad[28:36] = struct.pack("<d", float("nan"))
        with pytest.raises(ProtocolError, match="non-finite"):
            P.decode_response(bytes(bad))

    def test_bad_error_text(self):
        body = struct.pack("<IHHQI", P.MAGIC, 1, 1, 0, 2) + b"\xff\xfe"
        with pytest.raises(ProtocolError, match="utf-8"):
            P.decode_response(body)

    def test_mismatched_rows(self):
        with pytest.raises(ProtocolError):
            P.encode_response(P.InferenceResponse(1, np.ones((2, 2)), np.ones((3, 2))))


class TestStreams:
    def test_clean_eof(self):
        assert P.read_frame(io.BytesIO(b"")) is None

    def test_multiple_frames(self):
        buf = io.BytesIO()
        for body in (b"a", b"", b"xyz"):
            P.write_frame(buf, body)
        buf.seek(0)
        assert [P.read_frame(buf) for _ in range(4)] == [b"a", b"", b"xyz", None]

    def test_eof_in_prefix(self):
        with pytest.raises(ProtocolError):
            P.read_frame(io.BytesIO(b"\x05\x00"))

    def test_eof_in_body(self):
        with pytest.raises(ProtocolError):
            P.read_frame(io.BytesIO(b"\x05\x00\x00\x00abc"))

    def test_oversize_declared(self):
        with pytest.raises(ProtocolError, match="limit"):
            P.read_frame(io.BytesIO(struct.pack("<I", P.MAX_BODY + 1)))

    def test_unframe_mismatch(self):
        with pytest.raises(ProtocolError):
            P.unframe(b"\x04\x00\x00\x00ab")
        with pytest.raises(ProtocolError):
            P.unframe(b"\x04")
