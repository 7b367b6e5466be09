"""Trajectory JSONL: one joint-state record per line, validated against a shipped schema."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

import jsonschema

from rapid.errors import ContractError, RapidError, SequencingError, TimingError
from rapid.kinematics import JointState


@lru_cache(maxsize=1)
def schema() -> dict:
    return json.loads(resources.files("rapid.data").joinpath("trajectory.schema.json").read_text("utf-8"))


@lru_cache(maxsize=1)
def _validator() -> jsonschema.protocols.Validator:
    cls = jsonschema.validators.validator_for(schema())
    cls.check_schema(schema())
    return cls(schema())


@dataclass(frozen=True)
class TrajectoryRecord:
    state: JointState
    obs_noise: float | None = None


def to_record(state: JointState, obs_noise: float | None = None) -> dict:
    rec = {"t": state.t, "time_s": state.time_s, "q": list(state.q), "qdot": list(state.qdot), "tau": list(state.tau)}
    if state.phase is not None:
        rec["phase"] = state.phase
    if obs_noise is not None:
        rec["obs_noise"] = obs_noise
    return rec


def write_jsonl(states: Iterable[JointState], path: str | Path, obs_noise: float | None = None) -> int:
    n = 0
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for s in states:
                fh.write(json.dumps(to_record(s, obs_noise), separators=(",", ":")))
                fh.write("\n")
                n += 1
    except OSError as exc:
        raise RapidError(f"cannot write trajectory {path}: {exc}") from exc
    return n


def iter_jsonl(path: str | Path) -> Iterator[TrajectoryRecord]:
    """Parse and validate lazily; stream order (consecutive ``t``, rising ``time_s``) is enforced."""
    validator = _validator()
    prev: JointState | None = None
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise RapidError(f"cannot read trajectory {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ContractError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            err = jsonschema.exceptions.best_match(validator.iter_errors(rec))
            if err is not None:
                raise ContractError(f"{path}:{lineno}: {err.message}")
            state = JointState(rec["t"], rec["time_s"], rec["q"], rec["qdot"], rec["tau"], rec.get("phase"))
            if prev is not None:
                if state.t != prev.t + 1:
                    raise SequencingError(f"{path}:{lineno}: step {state.t} follows {prev.t}")
                if not state.time_s > prev.time_s:
                    raise TimingError(f"{path}:{lineno}: time_s does not increase")
            prev = state
            yield TrajectoryRecord(state, rec.get("obs_noise"))


def read_jsonl(path: str | Path) -> list[TrajectoryRecord]:
    return list(iter_jsonl(path))
