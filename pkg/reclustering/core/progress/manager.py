"""Progress manager for simulation runs."""

import time
from collections.abc import Generator
from contextlib import contextmanager
from typing import Any

from rich.console import Console
from rich.live import Live
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TaskID,
    TextColumn,
    TimeElapsedColumn,
    TimeRemainingColumn,
)

from .environment import EnvironmentType, detect_environment
from .models import CellProgressData, ProgressStatus, SimulationProgressData

# Plain-mode iteration lines per cell
LOG_STEPS = 4


class ProgressManager:
    """Shows cell and iteration progress on stderr.

    Interactive terminals get a live rich display; CI and test runs get plain
    ``[CELL i/N]`` lines. ``callback`` plugs into ``run_scenario``.
    """

    def __init__(self, console: Console | None = None, enabled: bool = True):
        self.console = console or Console(stderr=True)
        self.environment = detect_environment()
        self.interactive = enabled and self.environment == EnvironmentType.INTERACTIVE
        self.enabled = enabled

        self.run_data: SimulationProgressData | None = None
        self.cell_data: CellProgressData | None = None

        self.progress: Progress | None = None
        self.live_display: Live | None = None
        self.run_task: TaskID | None = None
        self.cell_task: TaskID | None = None
        self._next_log = 0

    @contextmanager
    def simulation_progress(self, run_name: str, total_cells: int) -> Generator[Any, None, None]:
        """Context manager for run-level progress tracking."""
        self.start_run(run_name, total_cells)
        success = False
        try:
            yield self
            success = True
        finally:
            self.finish_run(success)

    def start_run(self, run_name: str, total_cells: int) -> None:
        self.run_data = SimulationProgressData(
            run_name=run_name, current_cell=0, total_cells=total_cells, start_time=time.time()
        )
        if self.interactive:
            self._setup_interactive_display()

    def callback(self, event: str, **kwargs: Any) -> None:
        """Event sink for ``run_scenario``"""
        if event == "scenario_start":
            self.start_cell(kwargs["name"], kwargs["total"])
        elif event == "iterations_done":
            self.update_iterations(kwargs["completed"])
        elif event == "scenario_done":
            self.finish_cell()

    def start_cell(self, cell_name: str, total_iterations: int) -> None:
        if self.run_data:
            self.run_data.current_cell += 1
        self.cell_data = CellProgressData(
            cell_name=cell_name,
            completed_iterations=0,
            total_iterations=total_iterations,
            start_time=time.time(),
        )
        self._next_log = max(1, total_iterations // LOG_STEPS)

        if self.interactive and self.progress and self.cell_task is not None:
            self.progress.reset(
                self.cell_task, total=total_iterations, description=f"{cell_name}", visible=True
            )
        else:
            self._log_cell_start()

    def update_iterations(self, completed: int) -> None:
        if not self.cell_data:
            return
        self.cell_data.completed_iterations = completed
        if self.interactive and self.progress and self.cell_task is not None:
            self.progress.update(self.cell_task, completed=completed)
        elif completed >= self._next_log and completed < self.cell_data.total_iterations:
            self._log(
                f"[CELL {self._cell_position()}] {self.cell_data.cell_name}: "
                f"{completed}/{self.cell_data.total_iterations} iterations"
            )
            self._next_log = completed + max(1, self.cell_data.total_iterations // LOG_STEPS)

    def finish_cell(self, success: bool = True) -> None:
        if self.cell_data:
            self.cell_data.status = ProgressStatus.COMPLETED if success else ProgressStatus.FAILED
            elapsed = time.time() - self.cell_data.start_time
            if self.interactive and self.progress and self.run_task is not None:
                self.progress.advance(self.run_task)
            else:
                status = "done" if success else "failed"
                self._log(
                    f"[CELL {self._cell_position()}] {self.cell_data.cell_name}: "
                    f"{status} in {elapsed:.1f}s"
                )
        self.cell_data = None

    def finish_run(self, success: bool = True) -> None:
        if self.run_data:
            self.run_data.status = ProgressStatus.COMPLETED if success else ProgressStatus.FAILED
            total_time = time.time() - self.run_data.start_time
            if self.interactive:
                self._cleanup_interactive_display()
            status = "Completed" if success else "Failed"
            self._log(f"[SIMULATE] {status} {self.run_data.run_name} in {total_time:.1f}s")
        self.run_data = None
        self.cell_data = None

    def _cell_position(self) -> str:
        if not self.run_data:
            return "1/1"
        return f"{self.run_data.current_cell}/{self.run_data.total_cells}"

    def _log(self, message: str) -> None:
        if self.enabled:
            self.console.print(message, highlight=False)

    def _log_cell_start(self) -> None:
        if self.cell_data:
            self._log(
                f"[CELL {self._cell_position()}] {self.cell_data.cell_name}: "
                f"{self.cell_data.total_iterations} iterations"
            )

    def _setup_interactive_display(self) -> None:
        if not self.run_data:
            return

        self.progress = Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(bar_width=None),
            MofNCompleteColumn(),
            TimeElapsedColumn(),
            TimeRemainingColumn(),
            console=self.console,
            expand=True,
        )
        self.run_task = self.progress.add_task(
            f"{self.run_data.run_name}", total=self.run_data.total_cells
        )
        self.cell_task = self.progress.add_task("cell", total=1, visible=False)

        self.live_display = Live(self.progress, console=self.console, refresh_per_second=4)
        self.live_display.start()

    def _cleanup_interactive_display(self) -> None:
        if self.live_display:
            self.live_display.stop()
            self.live_display = None

        self.progress = None
        self.run_task = None
        self.cell_task = None
