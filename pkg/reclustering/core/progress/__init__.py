"""Simulation progress display."""

from .environment import EnvironmentType, detect_environment
from .manager import ProgressManager
from .models import CellProgressData, ProgressStatus, SimulationProgressData

__all__ = [
    "CellProgressData",
    "EnvironmentType",
    "ProgressManager",
    "ProgressStatus",
    "SimulationProgressData",
    "detect_environment",
]
