from rapid.cloud.client import ChunkReply, CloudClient, InProcessTransport, SocketTransport
from rapid.cloud.latency import LatencyModel
from rapid.cloud.service import MockVLA, estimate_noise, logit_entropy, shannon_entropy, softmax

__all__ = [
    "ChunkReply",
    "CloudClient",
    "InProcessTransport",
    "LatencyModel",
    "MockVLA",
    "SocketTransport",
    "estimate_noise",
    "logit_entropy",
    "shannon_entropy",
    "softmax",
]
