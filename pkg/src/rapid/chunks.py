"""Cached action-chunk queue with preemption and a hold-last-command stall policy."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from rapid.errors import ConfigError, ContractError


class ChunkSource(str, enum.Enum):
    EDGE = "edge-cache"
    CLOUD = "cloud"


@dataclass(frozen=True)
class ActionChunk:
    """``horizon`` consecutive joint-space commands produced by one inference call."""

    origin_step: int
    actions: np.ndarray  # shape (horizon, n_joints), read-only
    source: ChunkSource = ChunkSource.CLOUD
    seq: int = 0

    def __post_init__(self) -> None:
        a = np.array(self.actions, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ContractError(f"chunk actions must be a non-empty k x N matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ContractError("chunk actions must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def n_joints(self) -> int:
        return self.actions.shape[1]


@dataclass(frozen=True, slots=True)
class Stall:
    """Returned by :meth:`ActionQueue.pop_action` when no fresh action is available.

    ``command`` is what the arm should hold. ``awaiting`` tells whether a
    refill is already in flight; if not, the caller has to dispatch one.
    """

    command: np.ndarray | None
    awaiting: bool


@dataclass(frozen=True, slots=True)
class Executed:
    chunk_seq: int
    row: int
    command: np.ndarray


STALL_MODES = ("hold", "zero")


@dataclass
class ActionQueue:
    """FIFO of pending action rows. Owned by the control-rate task."""

    n_joints: int
    stall_mode: str = "hold"
    pending: deque = field(default_factory=deque)  # of (chunk_seq, row, command)
    in_flight: bool = False
    in_flight_seq: int | None = None
    stall_count: int = 0
    starved_count: int = 0
    enqueued: int = 0
    executed: int = 0
    discarded: int = 0
    dropped_responses: int = 0
    last_command: np.ndarray | None = None
    # chunk seq -> rows executed from it, for the prefix/exactly-once audit
    executed_rows: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.stall_mode not in STALL_MODES:
            raise ConfigError(f"stall_mode must be one of {STALL_MODES}")

    @property
    def empty(self) -> bool:
        return not self.pending

    @property
    def needs_refill(self) -> bool:
        """Empty with nothing on the way: the dispatcher's depletion condition."""
        return not self.pending and not self.in_flight

    @property
    def remaining(self) -> int:
        return len(self.pending)

    def mark_in_flight(self, seq: int) -> None:
        """Record a new outstanding request; it supersedes any older one."""
        self.in_flight = True
        self.in_flight_seq = seq

    def cancel_in_flight(self) -> None:
        self.in_flight = False
        self.in_flight_seq = None

    def pop_action(self) -> Executed | Stall:
        if self.pending:
            seq, row, cmd = self.pending.popleft()
            self.executed += 1
            self.executed_rows[seq] = self.executed_rows.get(seq, 0) + 1
            self.last_command = cmd
            return Executed(seq, row, cmd)
        if self.in_flight:
            self.stall_count += 1
        else:
            self.starved_count += 1
        return Stall(self._hold_command(), awaiting=self.in_flight)

    def _hold_command(self) -> np.ndarray | None:
        if self.last_command is None:
            return None
        if self.stall_mode == "zero":
            return np.zeros_like(self.last_command)
        return self.last_command

    def preempt_and_refill(self, chunk: ActionChunk) -> int:
        """Discard every pending row, enqueue ``chunk``; returns the discard count."""
        if chunk.n_joints != self.n_joints:
            raise ContractError(f"chunk has {chunk.n_joints} joints, queue expects {self.n_joints}")
        dropped = len(self.pending)
        self.discarded += dropped
        self.pending.clear()
        for i in range(chunk.horizon):
            self.pending.append((chunk.seq, i, chunk.actions[i]))
        self.enqueued += chunk.horizon
        self.in_flight = False
        self.in_flight_seq = None
        return dropped

    def offer(self, chunk: ActionChunk) -> int | None:
        """Apply a response only if it answers the newest outstanding request.

        Returns the discard count, or ``None`` when the response was stale.
        """
        if not self.in_flight or chunk.seq != self.in_flight_seq:
            self.dropped_responses += 1
            return None
        return self.preempt_and_refill(chunk)

    def conserved(self) -> bool:
        return self.enqueued == self.executed + self.discarded + self.remaining


def pop_action(queue: ActionQueue) -> Executed | Stall:
    return queue.pop_action()


def preempt_and_refill(queue: ActionQueue, new_chunk: ActionChunk) -> ActionQueue:
    queue.preempt_and_refill(new_chunk)
    return queue
