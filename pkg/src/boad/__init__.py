"""Bandit optimization of sub-agent teams for hierarchical coding agents."""

from boad.archive import Archive, SubAgentSpec
from boad.bandit import ArmStats, SelectionResult, record_samples, select_top_k, ucb_score

__all__ = [
    "Archive",
    "ArmStats",
    "SelectionResult",
    "SubAgentSpec",
    "record_samples",
    "select_top_k",
    "ucb_score",
]

__version__ = "0.1.0"
