"""Monte Carlo experiments: scenario cells, per-iteration test battery, rejection rates

Iteration ``i`` of cell ``c`` draws its data from the substream (seed, c, i, 0) and
runs its tests with the integer seed derived from (seed, c, i, 1). Both depend only
on the master seed and the indices, so cells re-run independently and results do not
depend on the number of worker processes.
"""

import logging
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .battery import run_battery
from .cluster_model import ClusterStructure, feasibility
from .dgp import DGPParams, make_iteration
from .exceptions import ReclusteringError, SimulationError
from .regression import Dataset
from .resampling import derive_seed, seed_sequence
from .results import TestResult
from .test_registry import TestSettings, get_global_registry

logger = logging.getLogger(__name__)

type ProgressCallback = Callable[..., None]

DATA_STREAM = 0
TEST_STREAM = 1
DEFAULT_ITERATIONS = 2000
ALL_TESTS = ["crse", "sv", "vmb", "wcr"]


class StructureSpec(BaseModel):
    """Sizes of a simulated two-level structure

    ``delta_gross`` gives alternate gross clusters n_g + delta and n_g - delta fine
    clusters; ``delta_fine`` does the same for units inside each gross cluster's fine
    clusters. Explicit lists override the constants.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_gross: int = Field(12, ge=1)
    fines_per_gross: int | list[int] = 12
    units_per_fine: int | list[int] = 100
    delta_gross: int = Field(0, ge=0)
    delta_fine: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_sizes(self) -> "StructureSpec":
        sizes = self.gross_sizes()
        if any(size < 1 for size in sizes):
            raise ValueError(f"every gross cluster needs a fine cluster, got sizes {sizes}")
        units = self.fine_sizes()
        if any(size < 1 for group in units for size in group):
            raise ValueError("every fine cluster needs a unit")
        return self

    def gross_sizes(self) -> list[int]:
        if isinstance(self.fines_per_gross, list):
            if len(self.fines_per_gross) != self.n_gross:
                raise ValueError(
                    f"fines_per_gross lists {len(self.fines_per_gross)} sizes "
                    f"for {self.n_gross} gross clusters"
                )
            return list(self.fines_per_gross)
        return [
            self.fines_per_gross + (self.delta_gross if g % 2 == 0 else -self.delta_gross)
            for g in range(self.n_gross)
        ]

    def fine_sizes(self) -> list[list[int]]:
        """Units per fine cluster, grouped by gross cluster"""
        gross_sizes = self.gross_sizes()
        if isinstance(self.units_per_fine, list):
            if len(self.units_per_fine) != sum(gross_sizes):
                raise ValueError(
                    f"units_per_fine lists {len(self.units_per_fine)} sizes "
                    f"for {sum(gross_sizes)} fine clusters"
                )
            bounds = np.cumsum([0, *gross_sizes])
            return [
                list(self.units_per_fine[start:stop])
                for start, stop in zip(bounds[:-1], bounds[1:], strict=True)
            ]
        return [
            [
                self.units_per_fine + (self.delta_fine if f % 2 == 0 else -self.delta_fine)
                for f in range(size)
            ]
            for size in gross_sizes
        ]

    def build(self) -> ClusterStructure:
        return ClusterStructure.from_sizes(self.fine_sizes())


class Scenario(BaseModel):
    """One simulation cell"""

    model_config = ConfigDict(extra="forbid")

    name: str = "baseline"
    structure: StructureSpec = Field(default_factory=StructureSpec)
    dgp: DGPParams = Field(default_factory=DGPParams)
    iterations: int = Field(DEFAULT_ITERATIONS, ge=1)
    tests: list[str] = Field(default_factory=lambda: list(ALL_TESTS))
    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    reps: int = Field(1000, ge=1)
    boot: int = Field(999, ge=1)
    mc_draws: int = Field(1000, ge=1)
    absorb_fine_fe: bool = True

    def describe(self) -> dict[str, Any]:
        """Flat cell parameters for report rows"""
        spec = self.structure
        return {
            "cell": self.name,
            "n_gross": spec.n_gross,
            "fines_per_gross": _flat(spec.fines_per_gross),
            "units_per_fine": _flat(spec.units_per_fine),
            "delta_gross": spec.delta_gross,
            "delta_fine": spec.delta_fine,
            "rho_x_gross": self.dgp.rho_x_gross,
            "rho_x_fine": self.dgp.rho_x_fine,
            "rho_u_gross": self.dgp.rho_u_gross,
            "rho_u_fine": self.dgp.rho_u_fine,
            "model": self.dgp.model,
        }


def _flat(value: int | list[int]) -> int | str:
    return value if isinstance(value, int) else " ".join(str(v) for v in value)


@dataclass(frozen=True)
class TestRate:
    """Rejection rate of one test in one cell with its Monte Carlo standard error"""

    __test__ = False

    test: str
    rejections: int
    iterations: int
    degenerate: int = 0
    dropped: int = 0

    @property
    def rate(self) -> float:
        return self.rejections / self.iterations

    @property
    def mc_se(self) -> float:
        return math.sqrt(self.rate * (1.0 - self.rate) / self.iterations)


@dataclass
class IterationRecord:
    """Per-test outcomes of one iteration"""

    iteration: int
    test_seed: int
    p_values: dict[str, float]
    decisions: dict[str, bool | None]
    statistics: dict[str, float]
    degenerate: dict[str, bool]
    dropped: dict[str, int]


@dataclass
class RejectionReport:
    scenario: Scenario
    cell: int
    rates: dict[str, TestRate]
    records: list[IterationRecord] = field(default_factory=list)
    runtime: float = 0.0

    def to_rows(self) -> list[dict[str, Any]]:
        """One row per test: cell parameters, test, rate, mc_se, z"""
        base = self.scenario.describe()
        return [
            {
                **base,
                "test": rate.test,
                "rate": rate.rate,
                "mc_se": rate.mc_se,
                "z": rate.iterations,
                "rejections": rate.rejections,
                "degenerate": rate.degenerate,
            }
            for rate in self.rates.values()
        ]

    def iteration_rows(self) -> list[dict[str, Any]]:
        """One row per iteration and test, for ``--dump``"""
        rows = []
        for record in self.records:
            for test, p_value in record.p_values.items():
                rows.append(
                    {
                        "cell": self.scenario.name,
                        "iteration": record.iteration,
                        "test_seed": record.test_seed,
                        "test": test,
                        "statistic": record.statistics[test],
                        "p_value": p_value,
                        "decision": record.decisions[test],
                        "degenerate": record.degenerate[test],
                    }
                )
        return rows


def iteration_seeds(seed: int, cell: int, iteration: int) -> tuple[np.random.SeedSequence, int]:
    """Data substream and integer test seed of one iteration"""
    return (
        seed_sequence(seed, cell, iteration, DATA_STREAM),
        derive_seed(seed, cell, iteration, TEST_STREAM),
    )


def simulate_dataset(
    scenario: Scenario, structure: ClusterStructure, seed: int, cell: int, iteration: int
) -> tuple[Dataset, int]:
    """Dataset of one iteration and the integer seed its tests run with"""
    data_seed, test_seed = iteration_seeds(seed, cell, iteration)
    return make_iteration(structure, scenario.dgp, data_seed, scenario.absorb_fine_fe), test_seed


def _run_iteration(
    scenario: Scenario,
    structure: ClusterStructure,
    settings: TestSettings,
    seed: int,
    cell: int,
    iteration: int,
) -> IterationRecord:
    try:
        data, test_seed = simulate_dataset(scenario, structure, seed, cell, iteration)
        results = run_battery(data, scenario.tests, settings, test_seed)
    except ReclusteringError as e:
        raise SimulationError(
            f"{e.message}", scenario_cell=scenario.name, iteration=iteration, original_error=e
        ) from e
    except Exception as e:
        raise SimulationError(
            f"Unexpected error: {e}",
            scenario_cell=scenario.name,
            iteration=iteration,
            original_error=e,
        ) from e
    return _record(iteration, test_seed, results)


def _run_chunk(
    args: tuple[Scenario, ClusterStructure, TestSettings, int, int, list[int]],
) -> list[IterationRecord]:
    scenario, structure, settings, seed, cell, iterations = args
    return [_run_iteration(scenario, structure, settings, seed, cell, i) for i in iterations]


def _record(iteration: int, test_seed: int, results: dict[str, TestResult]) -> IterationRecord:
    return IterationRecord(
        iteration=iteration,
        test_seed=test_seed,
        p_values={name: r.p_value for name, r in results.items()},
        decisions={name: r.decision for name, r in results.items()},
        statistics={name: r.statistic for name, r in results.items()},
        degenerate={name: r.degenerate for name, r in results.items()},
        dropped={name: r.dropped for name, r in results.items()},
    )


def aggregate(scenario: Scenario, records: Sequence[IterationRecord]) -> dict[str, TestRate]:
    """Rejection counts per test; withheld decisions count as non-rejections"""
    names = get_global_registry().resolve(tuple(scenario.tests))
    return {
        test.name: TestRate(
            test=test.name,
            rejections=sum(1 for r in records if r.decisions[test.name] is True),
            iterations=len(records),
            degenerate=sum(1 for r in records if r.degenerate[test.name]),
            dropped=sum(r.dropped[test.name] for r in records),
        )
        for test in names
    }


def run_scenario(
    scenario: Scenario,
    settings: TestSettings,
    seed: int,
    cell: int = 0,
    workers: int = 1,
    progress_callback: ProgressCallback | None = None,
) -> RejectionReport:
    """Run every iteration of one cell and aggregate the rejection rates

    Raises:
        SimulationError: any error inside an iteration, with cell and iteration attached
    """
    start = time.perf_counter()
    structure = scenario.structure.build()
    settings = _cell_settings(scenario, settings)
    selected = [test.name for test in get_global_registry().resolve(tuple(scenario.tests))]
    if "crse" in selected:
        feasibility(structure, settings.alpha, settings.sided)

    logger.info(
        f"Scenario {scenario.name}: {scenario.iterations} iterations, "
        f"g={structure.n_gross}, f={structure.n_fine}, n={structure.n}"
    )
    if progress_callback:
        progress_callback(
            "scenario_start", cell=cell, name=scenario.name, total=scenario.iterations
        )

    chunks = _chunks(scenario.iterations, workers)
    records: list[IterationRecord] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            jobs = [(scenario, structure, settings, seed, cell, chunk) for chunk in chunks]
            for chunk_records in executor.map(_run_chunk, jobs):
                records.extend(chunk_records)
                if progress_callback:
                    progress_callback("iterations_done", cell=cell, completed=len(records))
    else:
        for chunk in chunks:
            records.extend(_run_chunk((scenario, structure, settings, seed, cell, chunk)))
            if progress_callback:
                progress_callback("iterations_done", cell=cell, completed=len(records))

    report = RejectionReport(
        scenario=scenario,
        cell=cell,
        rates=aggregate(scenario, records),
        records=records,
        runtime=time.perf_counter() - start,
    )
    if progress_callback:
        progress_callback("scenario_done", cell=cell, report=report)
    logger.info(f"Scenario {scenario.name} finished in {report.runtime:.1f}s")
    return report


def _cell_settings(scenario: Scenario, settings: TestSettings) -> TestSettings:
    """Scenario counts and alpha; simulations run infeasible cells without stopping"""
    return replace(
        settings,
        alpha=scenario.alpha,
        reps=scenario.reps,
        boot=scenario.boot,
        mc_draws=scenario.mc_draws,
        threads=1,
        force=True,
        check_feasibility=False,
    )


def _chunks(total: int, workers: int, per_worker: int = 4) -> list[list[int]]:
    size = max(1, math.ceil(total / (max(workers, 1) * per_worker)))
    return [list(range(start, min(start + size, total))) for start in range(0, total, size)]


# --- Presets ----------------------------------------------------------------


def _cell(
    name: str, iterations: int = DEFAULT_ITERATIONS, rho_u: float = 0.0, **sizes: Any
) -> Scenario:
    return Scenario(
        name=name,
        structure=StructureSpec(**sizes),
        dgp=DGPParams(rho_u_gross=rho_u, rho_u_fine=rho_u),
        iterations=iterations,
    )


def _panels(
    prefix: str, key: str, values: Sequence[int], **fixed: Any
) -> dict[str, list[Scenario]]:
    """Left panel at rho_u = 0, right panel at rho_u = 0.1"""
    return {
        f"{prefix}-left": [
            _cell(f"{prefix}-left:{key}={v}", 2000, 0.0, **{key: v}, **fixed) for v in values
        ],
        f"{prefix}-right": [
            _cell(f"{prefix}-right:{key}={v}", 1200, 0.1, **{key: v}, **fixed) for v in values
        ],
    }


def _heterogeneity(prefix: str, key: str, deltas: Sequence[int]) -> list[Scenario]:
    return [
        _cell(f"{prefix}:rho_u={rho}:{key}={d}", 4000, rho, **{key: d})
        for rho in (0.0, 0.1)
        for d in deltas
    ]


def _very_small(prefix: str, key: str, values: Sequence[int], **fixed: Any) -> list[Scenario]:
    return [_cell(f"{prefix}:{key}={v}", 2000, 0.0, **{key: v}, **fixed) for v in values]


def scenario_presets() -> dict[str, list[Scenario]]:
    """Named scenario grids; ``baseline`` is g = n_g = 12, n_gf = 100, rho_x = 0.5, rho_u = 0"""
    presets: dict[str, list[Scenario]] = {
        "baseline": [_cell("baseline")],
        "fig1": [
            _cell("fig1:rho_u=0", 2000, 0.0),
            _cell("fig1:rho_u=0.1", 1200, 0.1),
            _cell("fig1:rho_u=0.2", 2000, 0.2),
        ],
    }
    presets |= _panels("fig2", "n_gross", (4, 8, 12))
    presets |= _panels("fig3", "fines_per_gross", (4, 8, 12))
    presets |= _panels("fig4", "units_per_fine", (25, 50, 100))
    presets["fig5-hf"] = _heterogeneity("fig5-hf", "delta_fine", (0, 33, 66))
    presets["fig5-hg"] = _heterogeneity("fig5-hg", "delta_gross", (0, 4, 8))
    presets["fig6-left"] = _very_small(
        "fig6-left", "n_gross", (2, 3, 4, 5, 6, 12, 36, 100), fines_per_gross=2, units_per_fine=2
    )
    presets["fig6-right"] = _very_small(
        "fig6-right", "fines_per_gross", (2, 3, 4, 5, 6), n_gross=2, units_per_fine=2
    )
    presets["fig7-left"] = _very_small(
        "fig7-left", "n_gross", (3, 6, 12), fines_per_gross=4, units_per_fine=2
    )
    presets["fig7-right"] = _very_small(
        "fig7-right", "units_per_fine", (2, 4, 6, 12, 24, 36), n_gross=4, fines_per_gross=2
    )
    return presets
