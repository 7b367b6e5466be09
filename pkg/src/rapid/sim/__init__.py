from rapid.sim.engine import (
    EpisodeRun,
    PolicyKind,
    fit_routing_overhead,
    pooled_total_ms,
    run_baseline_entropy,
    run_episode,
    simulate,
)
from rapid.sim.observation import ObservationBlob, make_observation
from rapid.sim.scenario import (
    TASK_CRITICAL_RATIO,
    Scenario,
    Segment,
    Trajectory,
    generate,
    task_scenario,
    trajectory_from_states,
)

generate_scenario = generate

__all__ = [
    "EpisodeRun",
    "ObservationBlob",
    "PolicyKind",
    "Scenario",
    "Segment",
    "TASK_CRITICAL_RATIO",
    "Trajectory",
    "fit_routing_overhead",
    "generate",
    "generate_scenario",
    "make_observation",
    "pooled_total_ms",
    "run_baseline_entropy",
    "run_episode",
    "simulate",
    "task_scenario",
    "trajectory_from_states",
]
