"""Synthetic tasks and simulated trajectories for offline runs."""

from boad.simenv.backend import SimulatedBackend, design_set, oracle_judge, simulate_trajectory
from boad.simenv.world import Task, WorldError, WorldModel

__all__ = [
    "SimulatedBackend", "Task", "WorldError", "WorldModel",
    "design_set", "oracle_judge", "simulate_trajectory",
]
