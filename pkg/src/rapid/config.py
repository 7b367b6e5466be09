"""TOML configuration: latency/load presets, trigger settings and scenario specs."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from rapid.cloud.latency import LatencyModel
from rapid.errors import ConfigError
from rapid.kinematics import WeightProfile
from rapid.sim.scenario import Scenario, Segment, task_scenario
from rapid.trigger import TriggerConfig

POLICIES = ("edge_only", "cloud_only", "vision_entropy", "rapid")
BUILTIN_PRESETS = ("sim", "real")


@dataclass(frozen=True)
class PolicyCost:
    """Where a policy keeps its parameters, and its fixed per-cycle routing cost."""

    cloud_load_gb: float
    edge_load_gb: float
    routing_overhead_ms: float = 0.0

    @property
    def total_load_gb(self) -> float:
        return self.cloud_load_gb + self.edge_load_gb

    def shares(self) -> tuple[float, float]:
        """``(edge_share, cloud_share)`` of the model held on each side."""
        total = self.total_load_gb
        if total <= 0:
            raise ConfigError("a policy must place a positive load somewhere")
        return self.edge_load_gb / total, self.cloud_load_gb / total


@dataclass(frozen=True)
class Preset:
    name: str
    edge: LatencyModel
    cloud: LatencyModel
    total_load_gb: float
    policies: Mapping[str, PolicyCost]
    horizon: int = 8
    bins: int = 256
    obs_bytes: int = 150528
    timeout_ms: float = 2000.0
    entropy_threshold_bits: float = 7.2
    offload_overhead_ms: float = 0.0
    reference: Mapping[str, float] = field(default_factory=dict)
    vision_by_noise: Mapping[float, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [p for p in POLICIES if p not in self.policies]
        if missing:
            raise ConfigError(f"preset {self.name!r} lacks policy sections: {missing}")
        for name, cost in self.policies.items():
            if abs(cost.total_load_gb - self.total_load_gb) > 1e-9:
                raise ConfigError(
                    f"preset {self.name!r}: {name} places {cost.total_load_gb} GB, total is {self.total_load_gb} GB"
                )
        if self.horizon < 1 or self.bins < 2 or self.obs_bytes < 0:
            raise ConfigError("horizon >= 1, bins >= 2 and obs_bytes >= 0 required")

    def cost(self, policy: str) -> PolicyCost:
        try:
            return self.policies[policy]
        except KeyError:
            raise ConfigError(f"unknown policy {policy!r}; choose from {POLICIES}") from None

    def with_routing(self, policy: str, routing_ms: float) -> Preset:
        costs = dict(self.policies)
        c = costs[policy]
        costs[policy] = PolicyCost(c.cloud_load_gb, c.edge_load_gb, routing_ms)
        return replace(self, policies=costs)

    def with_seed(self, seed: int) -> Preset:
        """Derive independent edge and cloud jitter streams for an episode seed."""
        return replace(
            self,
            edge=replace(self.edge, seed=self.edge.seed * 1_000_003 + 2 * seed),
            cloud=replace(self.cloud, seed=self.cloud.seed * 1_000_003 + 2 * seed + 1),
        )


def _read_toml(path: Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _latency(section: Mapping[str, Any], where: str) -> LatencyModel:
    try:
        return LatencyModel(
            base_ms=float(section["base_ms"]),
            jitter_ms=float(section.get("jitter_ms", 0.0)),
            bandwidth_mbps=float(section.get("bandwidth_mbps", math.inf)),
            seed=int(section.get("seed", 0)),
        )
    except KeyError as exc:
        raise ConfigError(f"{where}: missing {exc.args[0]}") from None


def preset_from_dict(data: Mapping[str, Any]) -> Preset:
    try:
        policies = {
            name: PolicyCost(
                cloud_load_gb=float(p["cloud_load_gb"]),
                edge_load_gb=float(p["edge_load_gb"]),
                routing_overhead_ms=float(p.get("routing_overhead_ms", 0.0)),
            )
            for name, p in data.get("policy", {}).items()
        }
        ref = dict(data.get("reference", {}))
        by_noise = {float(k): float(v) for k, v in ref.pop("vision_by_noise", {}).items()}
        return Preset(
            name=str(data.get("name", "custom")),
            edge=_latency(data["edge"], "edge"),
            cloud=_latency(data["cloud"], "cloud"),
            total_load_gb=float(data["total_load_gb"]),
            policies=policies,
            horizon=int(data.get("horizon", 8)),
            bins=int(data.get("bins", 256)),
            obs_bytes=int(data.get("obs_bytes", 150528)),
            timeout_ms=float(data.get("timeout_ms", 2000.0)),
            entropy_threshold_bits=float(data.get("entropy_threshold_bits", 7.2)),
            offload_overhead_ms=float(data.get("offload_overhead_ms", 0.0)),
            reference={k: float(v) for k, v in ref.items()},
            vision_by_noise=by_noise,
        )
    except KeyError as exc:
        raise ConfigError(f"preset is missing key {exc.args[0]!r}") from None


def load_preset(name_or_path: str | Path) -> Preset:
    """Load a built-in preset by name (``sim``, ``real``) or any preset file by path."""
    if str(name_or_path) in BUILTIN_PRESETS:
        text = resources.files("rapid.data").joinpath(f"{name_or_path}.toml").read_text("utf-8")
        return preset_from_dict(tomllib.loads(text))
    return preset_from_dict(_read_toml(Path(name_or_path)))


_TRIGGER_KEYS = {f.name for f in fields(TriggerConfig)}


def trigger_from_dict(data: Mapping[str, Any]) -> TriggerConfig:
    unknown = set(data) - _TRIGGER_KEYS - {"w_a", "w_tau"}
    if unknown:
        raise ConfigError(f"unknown trigger keys: {sorted(unknown)}")
    kw = {k: v for k, v in data.items() if k in _TRIGGER_KEYS and k != "weight_profile"}
    if "w_a" in data or "w_tau" in data:
        if not ("w_a" in data and "w_tau" in data):
            raise ConfigError("give both w_a and w_tau, or neither")
        kw["weight_profile"] = WeightProfile(tuple(data["w_a"]), tuple(data["w_tau"]))
    return TriggerConfig(**kw)


def scenario_from_dict(data: Mapping[str, Any]) -> Scenario:
    """Either a task family (``task = "drawer"``) or an explicit ``[[segments]]`` list."""
    data = dict(data)
    if "segments" in data:
        segs = tuple(Segment(**s) for s in data.pop("segments"))
        allowed = {"n_joints", "sensor_hz", "control_hz", "noise_level", "seed", "name",
                   "approach_accel", "approach_omega", "duration_s"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return Scenario(segments=segs, **data)
    allowed = {"task", "seed", "n_joints", "duration_s", "noise_level", "first_approach_s",
               "sensor_hz", "control_hz"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    return task_scenario(**data)


@dataclass(frozen=True)
class RunConfig:
    preset: Preset
    trigger: TriggerConfig
    scenario: Scenario
    policy: str = "rapid"
    transport: str = "inprocess"
    host: str = "127.0.0.1"
    port: int = 7878


def load_run_config(path: str | Path) -> RunConfig:
    data = _read_toml(Path(path))
    preset_ref = data.get("preset", "sim")
    preset = preset_from_dict(preset_ref) if isinstance(preset_ref, dict) else load_preset(preset_ref)
    cloud = data.get("cloud", {})
    policy = data.get("policy", "rapid")
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}; choose from {POLICIES}")
    return RunConfig(
        preset=preset,
        trigger=trigger_from_dict(data.get("trigger", {})),
        scenario=scenario_from_dict(data.get("scenario", {})),
        policy=policy,
        transport=cloud.get("transport", "inprocess"),
        host=cloud.get("host", "127.0.0.1"),
        port=int(cloud.get("port", 7878)),
    )
