#!/usr/bin/env python3
"""
Acceptance checks for reclustering.

Runs the partition table check and the simulation checks for size, power ordering,
very small structures and small-sample validity. Simulations take minutes to hours;
``--quick`` cuts the baseline size check to 500 iterations with a wider band.
"""

import sys
from collections.abc import Callable
from dataclasses import dataclass

import click
from rich.console import Console
from rich.table import Table

from reclustering.core.cluster_model import partitions_from_sizes
from reclustering.core.simulator import RejectionReport, Scenario, run_scenario, scenario_presets
from reclustering.core.test_registry import TestSettings

console = Console()

PARTITION_TABLE = {
    2: [3, 10, 35, 126],
    3: [15, 280, 5_775, 126_126],
    4: [105, 15_400, 2_627_625, 488_864_376],
}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    # Known gap recorded in DESIGN.md; reported but does not fail the run
    documented: bool = False

    @property
    def failed(self) -> bool:
        return not self.passed and not self.documented

    @property
    def label(self) -> str:
        if self.passed:
            return "✅"
        return "⚠️ documented deviation" if self.documented else "❌"


def check_partition_table() -> list[Check]:
    checks = []
    for n_gross, expected in PARTITION_TABLE.items():
        got = [partitions_from_sizes([n] * n_gross) for n in (2, 3, 4, 5)]
        checks.append(
            Check(f"partitions g={n_gross}", got == expected, ", ".join(f"{v:,}" for v in got))
        )
    return checks


def _preset(name: str, cell: str) -> Scenario:
    return next(s for s in scenario_presets()[name] if s.name == cell)


def _run(scenario: Scenario, seed: int, workers: int, **update: object) -> RejectionReport:
    scenario = scenario.model_copy(update=update)
    console.print(f"🧪 {scenario.name}: {scenario.iterations} iterations, tests {scenario.tests}")
    return run_scenario(scenario, TestSettings(), seed=seed, workers=workers)


def _rates(report: RejectionReport) -> str:
    return ", ".join(f"{name} {rate.rate:.3f}" for name, rate in report.rates.items())


def check_size(seed: int, workers: int, quick: bool) -> list[Check]:
    iterations, low, high = (500, 0.025, 0.08) if quick else (2000, 0.035, 0.065)
    report = _run(_preset("baseline", "baseline"), seed, workers, iterations=iterations)
    rates = report.rates
    return [
        Check(
            "size: crse and sv near 0.05",
            all(low <= rates[name].rate <= high for name in ("crse", "sv")),
            _rates(report),
        ),
        Check(
            "size: wcr over-rejects",
            rates["wcr"].rate > 0.07,
            f"wcr {rates['wcr'].rate:.3f}",
            documented=True,
        ),
    ]


def check_power(seed: int, workers: int) -> list[Check]:
    cells = ["fig1:rho_u=0", "fig1:rho_u=0.1", "fig1:rho_u=0.2"]
    reports = [_run(_preset("fig1", cell), seed, workers, iterations=500) for cell in cells]
    checks = []
    for name in ("crse", "sv"):
        series = [r.rates[name].rate for r in reports]
        wcr = [r.rates["wcr"].rate for r in reports]
        checks.append(
            Check(
                f"power: {name} increases in rho_u and beats wcr",
                series[0] < series[1] < series[2] and series[1] > wcr[1] and series[2] > wcr[2],
                ", ".join(f"{v:.3f}" for v in series),
            )
        )
    vmb = [r.rates["vmb"].rate for r in reports]
    checks.append(
        Check(
            "power: vmb stays near its null rate",
            all(abs(v - vmb[0]) <= 0.05 for v in vmb[1:]),
            ", ".join(f"{v:.3f}" for v in vmb),
        )
    )
    return checks


def check_very_small(seed: int, workers: int) -> list[Check]:
    cases = [
        ("fig6-left", "fig6-left:n_gross=2", 1 / 3, 0.04),
        ("fig6-left", "fig6-left:n_gross=3", 1 / 15, 0.03),
        ("fig6-right", "fig6-right:fines_per_gross=3", 1 / 10, 0.03),
    ]
    checks = []
    for preset, cell, expected, tolerance in cases:
        report = _run(_preset(preset, cell), seed, workers, tests=["crse"])
        rate = report.rates["crse"].rate
        checks.append(
            Check(
                f"very small: {cell}",
                abs(rate - expected) <= tolerance,
                f"crse {rate:.3f} vs {expected:.3f}",
            )
        )
    return checks


def check_small_sample(seed: int, workers: int) -> list[Check]:
    report = _run(_preset("fig6-left", "fig6-left:n_gross=4"), seed, workers)
    rates = report.rates
    return [
        Check("small sample: crse valid", 0.03 <= rates["crse"].rate <= 0.07, _rates(report)),
        Check("small sample: vmb over-rejects", rates["vmb"].rate > 0.10, _rates(report)),
        Check(
            "small sample: wcr over-rejects",
            rates["wcr"].rate > 0.10,
            f"wcr {rates['wcr'].rate:.3f}",
            documented=True,
        ),
    ]


@click.command()
@click.option("--quick", is_flag=True, help="Baseline size check at 500 iterations")
@click.option("--workers", type=int, default=1, show_default=True, help="Worker processes")
@click.option("--seed", type=int, default=20250505, show_default=True, help="Simulation seed")
@click.option(
    "--only",
    type=click.Choice(["partitions", "size", "power", "very-small", "small-sample"]),
    multiple=True,
    help="Run only the named checks",
)
def main(quick: bool, workers: int, seed: int, only: tuple[str, ...]) -> None:
    """Run the acceptance checks and exit 1 if any fails."""
    groups: dict[str, Callable[[], list[Check]]] = {
        "partitions": check_partition_table,
        "size": lambda: check_size(seed, workers, quick),
        "power": lambda: check_power(seed, workers),
        "very-small": lambda: check_very_small(seed, workers),
        "small-sample": lambda: check_small_sample(seed, workers),
    }
    checks: list[Check] = []
    for name, run in groups.items():
        if not only or name in only:
            checks.extend(run())

    table = Table(title="Acceptance checks")
    table.add_column("Check")
    table.add_column("Result")
    table.add_column("Detail")
    for check in checks:
        table.add_row(check.name, check.label, check.detail)
    console.print(table)

    failed = [check for check in checks if check.failed]
    deviations = sum(check.documented and not check.passed for check in checks)
    if deviations:
        console.print(f"⚠️ {deviations} documented deviation(s), see DESIGN.md")
    if failed:
        console.print(f"❌ {len(failed)} of {len(checks)} checks failed")
        sys.exit(1)
    if deviations:
        console.print(f"🎉 No failures, {len(checks) - deviations} of {len(checks)} checks passed")
    else:
        console.print(f"🎉 All {len(checks)} checks passed")


if __name__ == "__main__":
    main()
