"""Kinematic-triggered edge-cloud offloading for chunked robot policies."""

from rapid.chunks import ActionChunk, ActionQueue, ChunkSource
from rapid.kinematics import JointState, KinematicSample, WeightProfile
from rapid.rolling import NormalizedScore, RollingWindow
from rapid.trigger import Decision, Dispatcher, DispatcherState, TriggerConfig

__version__ = "0.1.0"

__all__ = [
    "ActionChunk",
    "ActionQueue",
    "ChunkSource",
    "Decision",
    "Dispatcher",
    "DispatcherState",
    "JointState",
    "KinematicSample",
    "NormalizedScore",
    "RollingWindow",
    "TriggerConfig",
    "WeightProfile",
]
