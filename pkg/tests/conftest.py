from __future__ import annotations

import sys

import numpy as np
import pytest

from rapid.config import load_preset
from rapid.kinematics import JointState
from rapid.sim.scenario import Scenario, Segment, task_scenario


@pytest.fixture(scope="session")
def sim_preset():
    return load_preset("sim")


@pytest.fixture(scope="session")
def real_preset():
    return load_preset("real")


@pytest.fixture
def short_task():
    """Ten-second pick-and-place episode: two interactions, fast to simulate."""
    return task_scenario("pick_place", seed=3, duration_s=10.0)


@pytest.fixture
def approach_only():
    return Scenario(n_joints=7, segments=(Segment("approach", 6.0),), seed=1)


def make_states(qdot, tau=None, dt=0.002, start=0):
    qdot = np.asarray(qdot, dtype=float)
    tau = np.zeros_like(qdot) if tau is None else np.asarray(tau, dtype=float)
    return [
        JointState(start + i, (start + i) * dt, tuple(np.zeros(qdot.shape[1])), tuple(qdot[i]), tuple(tau[i]))
        for i in range(len(qdot))
    ]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
