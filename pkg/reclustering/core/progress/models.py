"""Progress tracking data models."""

from dataclasses import dataclass
from enum import Enum


class ProgressStatus(Enum):
    """Status of a progress item."""

    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class SimulationProgressData:
    """Progress over the cells of one simulation run."""

    run_name: str
    current_cell: int
    total_cells: int
    start_time: float
    status: ProgressStatus = ProgressStatus.RUNNING


@dataclass
class CellProgressData:
    """Progress over the iterations of one cell."""

    cell_name: str
    completed_iterations: int
    total_iterations: int
    start_time: float
    status: ProgressStatus = ProgressStatus.RUNNING
