from __future__ import annotations

import math
import socket

import numpy as np
import pytest

from rapid.chunks import ChunkSource
from rapid.cloud import protocol as P
from rapid.cloud.client import CloudClient, InProcessTransport, SocketTransport
from rapid.cloud.latency import LatencyModel
from rapid.cloud.server import CloudServer
from rapid.cloud.service import MockVLA, estimate_noise, logit_entropy, shannon_entropy, softmax
from rapid.errors import CloudTimeout, ConfigError, ContractError, ProtocolError
from rapid.sim.observation import clean_frame, make_observation


class TestEntropy:
    def test_examples(self):
        assert shannon_entropy(np.full(256, 1 / 256)) == pytest.approx(8.0, abs=1e-12)
        assert shannon_entropy(np.eye(1, 10)[0]) == 0.0
        assert shannon_entropy([0.5, 0.5]) == pytest.approx(1.0)

    @pytest.mark.parametrize("bad", [[0.5, 0.6], [-0.1, 1.1], [], [[0.5, 0.5]], [math.nan, 1.0]])
    def test_invalid(self, bad):
        with pytest.raises(ContractError):
            shannon_entropy(bad)

    def test_logit_entropy_matches_direct(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((5, 256)) * 3
        direct = [shannon_entropy(p / p.sum()) for p in softmax(logits)]
        assert logit_entropy(logits) == pytest.approx(direct, abs=1e-9)
        assert logit_entropy(np.zeros((1, 256)))[0] == pytest.approx(8.0)
        assert logit_entropy(np.array([[1e4, 0.0, 0.0]]))[0] == pytest.approx(0.0, abs=1e-12)


class TestObservation:
    def test_clean_frame_is_smooth(self):
        f = clean_frame(3, 100_000).astype(int)
        assert np.max(np.abs(np.diff(f))) <= 1 and estimate_noise(f.astype(np.uint8).tobytes()) == 0.0

    @pytest.mark.parametrize("p", [0.1, 0.4, 0.8])
    def test_noise_estimate(self, p):
        assert estimate_noise(make_observation(5, p, seed=2).payload) == pytest.approx(p, abs=0.01)

    def test_deterministic_and_sized(self):
        a, b = make_observation(9, 0.3, 1000, 1), make_observation(9, 0.3, 1000, 1)
        assert a == b and len(a) == 1000
        assert make_observation(9, 0.3, 1000, 2).payload != a.payload

    def test_validation(self):
        with pytest.raises(ConfigError):
            make_observation(0, 1.5)
        with pytest.raises(ConfigError):
            make_observation(0, 0.0, -1)


class TestService:
    def test_same_request_same_bytes(self):
        vla = MockVLA(7, seed=4)
        body = P.encode_request(P.InferenceRequest(1, 12, make_observation(12, 0.4, 5000).payload))
        assert vla.serve(body) == vla.serve(body)
        assert MockVLA(7, seed=5).serve(body) != vla.serve(body)

    def test_noise_flattens_distribution(self):
        vla = MockVLA(7, seed=0)
        for step in range(20):
            _, l0 = vla.infer(step, make_observation(step, 0.0, 20_000).payload)
            _, l8 = vla.infer(step, make_observation(step, 0.8, 20_000).payload)
            assert logit_entropy(l8).mean() > logit_entropy(l0).mean()

    def test_expected_entropy_non_decreasing_in_noise(self):
        vla = MockVLA(7, seed=1)
        levels = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        means = []
        for p in levels:
            ent = [logit_entropy(vla.infer(s, make_observation(s, p, 20_000, 1).payload)[1]).mean() for s in range(100)]
            means.append(float(np.mean(ent)))
        assert all(b >= a for a, b in zip(means, means[1:])), means

    def test_actions_ignore_payload(self):
        vla = MockVLA(3)
        a0, _ = vla.infer(4, b"")
        a1, _ = vla.infer(4, make_observation(4, 0.9, 1000).payload)
        assert np.array_equal(a0, a1) and a0.shape == (8, 3)

    def test_malformed_and_version_frames(self):
        vla = MockVLA(2)
        bad = P.decode_response(vla.serve(b"\x01\x02"))
        assert isinstance(bad, P.ErrorResponse) and bad.status == P.STATUS_PROTOCOL_ERROR and bad.seq == 0
        req = P.encode_request(P.InferenceRequest(77, 1, b"", version=9))
        rej = P.decode_response(vla.serve(req))
        assert rej.status == P.STATUS_VERSION_REJECTED and rej.seq == 77

    def test_validation(self):
        with pytest.raises(ContractError):
            MockVLA(0)


class TestLatency:
    def test_fixed_cloud_value(self):
        assert LatencyModel(121.5).sample(0, payload_bytes=150_528) == 121.5

    def test_transfer_term(self):
        assert LatencyModel(0.0, bandwidth_mbps=100.0).sample(3, payload_bytes=1_250_000) == pytest.approx(100.0)

    def test_jitter_bounded_and_deterministic(self):
        m = LatencyModel(100.0, 20.0, seed=7)
        xs = [m.sample(i) for i in range(2000)]
        assert min(xs) >= 80.0 and max(xs) <= 120.0
        assert xs == [m.sample(i) for i in range(2000)]
        assert np.mean(xs) == pytest.approx(100.0, abs=1.0)
        assert LatencyModel(100.0, 20.0, seed=8).sample(0) != xs[0]

    def test_share_scales_compute_only(self):
        m = LatencyModel(100.0, bandwidth_mbps=8.0)
        assert m.sample(0, 1000, compute_share=0.25) == pytest.approx(25.0 + 1.0)
        assert m.mean_ms(1000, 0.5) == pytest.approx(51.0)

    def test_never_negative(self):
        assert min(LatencyModel(1.0, 50.0).sample(i) for i in range(200)) >= 0.0

    @pytest.mark.parametrize("kw", [{"base_ms": -1}, {"base_ms": 1, "jitter_ms": -1}, {"base_ms": 1, "bandwidth_mbps": 0}])
    def test_validation(self, kw):
        with pytest.raises(ConfigError):
            LatencyModel(**kw)


class FlakyTransport:
    """Swallows the first ``drop`` requests, then behaves like the in-process transport."""

    def __init__(self, service, drop):
        self.inner = InProcessTransport(service)
        self.drop = drop
        self.sent = 0

    def send(self, body):
        self.sent += 1
        if self.drop > 0:
            self.drop -= 1
            return
        self.inner.send(body)

    def recv(self):
        return self.inner.recv()


class StaleFirstTransport(InProcessTransport):
    """Delivers a response to an old sequence number ahead of the real one."""

    def send(self, body):
        req = P.decode_request(body)
        stale = P.encode_request(P.InferenceRequest(req.seq + 1000, req.step, req.payload))
        super().send(stale)
        super().send(body)


class TestClient:
    obs = make_observation(3, 0.0, 64)

    def test_simulated_latency_and_chunk(self):
        client = CloudClient(InProcessTransport(MockVLA(4)), latency=LatencyModel(121.5))
        reply = client.request_chunk(self.obs)
        assert reply.latency_ms == 121.5 and reply.attempts == 1
        assert reply.chunk.source is ChunkSource.CLOUD and reply.chunk.actions.shape == (8, 4)
        assert reply.chunk.seq == 1 and client.next_seq == 2

    def test_one_retry_then_success(self):
        t = FlakyTransport(MockVLA(2), drop=1)
        client = CloudClient(t, latency=LatencyModel(100.0), timeout_ms=2000.0)
        reply = client.request_chunk(self.obs)
        assert reply.attempts == 2 and reply.latency_ms == 2100.0 and t.sent == 2 and client.timeouts == 1

    def test_two_timeouts_raise(self):
        t = FlakyTransport(MockVLA(2), drop=5)
        client = CloudClient(t, latency=LatencyModel(100.0))
        with pytest.raises(CloudTimeout):
            client.request_chunk(self.obs)
        assert t.sent == 2 and client.timeouts == 2

    def test_slow_model_counts_as_timeout(self):
        client = CloudClient(InProcessTransport(MockVLA(2)), latency=LatencyModel(3000.0), timeout_ms=2000.0)
        with pytest.raises(CloudTimeout):
            client.request_chunk(self.obs)

    def test_sequence_mismatch_dropped(self):
        client = CloudClient(StaleFirstTransport(MockVLA(2)), latency=LatencyModel(10.0))
        reply = client.request_chunk(self.obs)
        assert reply.chunk.seq == 1 and client.dropped == 1

    def test_error_response_raises(self):
        class Rejecting(InProcessTransport):
            def send(self, body):
                self._inbox.append(P.encode_response(P.ErrorResponse(P.decode_request(body).seq, 1, "nope")))

        with pytest.raises(ProtocolError, match="nope"):
            CloudClient(Rejecting(MockVLA(2))).request_chunk(self.obs)

    def test_wall_clock_without_model(self):
        reply = CloudClient(InProcessTransport(MockVLA(2))).request_chunk(self.obs)
        assert 0.0 <= reply.latency_ms < 1000.0


@pytest.fixture
def server():
    with CloudServer("127.0.0.1", 0, MockVLA(3, seed=2)) as srv:
        yield srv


class TestSocket:
    def test_same_bytes_as_in_process(self, server):
        body = P.encode_request(P.InferenceRequest(9, 4, make_observation(4, 0.5, 4096).payload))
        with SocketTransport("127.0.0.1", server.port) as t:
            t.send(body)
            assert t.recv() == MockVLA(3, seed=2).serve(body)

    def test_malformed_body_gets_error_and_connection_survives(self, server):
        with socket.create_connection(("127.0.0.1", server.port), timeout=5) as s:
            f = s.makefile("rwb")
            good = P.encode_request(P.InferenceRequest(1, 1, b"abc"))
            P.write_frame(f, good[:-2])  # body shorter than its declared payload
            err = P.decode_response(P.read_frame(f))
            assert isinstance(err, P.ErrorResponse) and err.status == P.STATUS_PROTOCOL_ERROR and err.seq == 1
            P.write_frame(f, good)
            ok = P.decode_response(P.read_frame(f))
            assert isinstance(ok, P.InferenceResponse) and ok.seq == 1

    def test_broken_frame_closes_connection_but_server_lives(self, server):
        with socket.create_connection(("127.0.0.1", server.port), timeout=5) as s:
            s.sendall(b"\xff\xff\xff\x7f")  # declared length above the limit
            assert s.recv(16) == b""
        client = CloudClient(SocketTransport("127.0.0.1", server.port), latency=LatencyModel(50.0))
        assert client.request_chunk(make_observation(1, 0.0, 32)).latency_ms == 50.0
        client.transport.close()

    def test_recv_before_send(self):
        with pytest.raises(ProtocolError):
            SocketTransport("127.0.0.1", 1).recv()
