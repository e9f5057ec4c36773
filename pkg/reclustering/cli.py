"""reclustering CLI module"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, NoReturn, TypedDict, Unpack

import click
import pandas as pd
from pydantic import BaseModel, ConfigDict
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import __version__
from .core.battery import run_battery
from .core.cluster_model import ClusterStructure, count_regroupings, feasibility
from .core.config_loader import (
    ConfigLoader,
    ReclusteringConfig,
    apply_config,
    load_scenario_file,
)
from .core.dgp import DGPModel, MixWeights
from .core.exceptions import (
    EXIT_USAGE,
    ConfigurationError,
    ErrorReporter,
    ReclusteringError,
    create_error_from_exception,
)
from .core.progress import ProgressManager
from .core.recluster import ReclusterMode
from .core.regression import ols_fit
from .core.resampling import Sidedness, sided_label
from .core.results import TestResult
from .core.simulator import (
    RejectionReport,
    Scenario,
    run_scenario,
    scenario_presets,
    simulate_dataset,
)
from .core.table_io import (
    AuditHeader,
    ColumnMapping,
    dataset_frame,
    draws_frame,
    read_audit_header,
    read_dataset,
    write_frame_to,
)
from .core.test_registry import StatisticName, get_global_registry
from .core.variance import Convention, CoefficientSummary, coefficient_summary

# Results go to stdout; logs, progress and errors go to stderr
console = Console()
err_console = Console(stderr=True)

TEST_CHOICES = ["crse", "sv", "vmb", "wcr", "all"]
SIDED_CHOICES = ["two", "one", "lower"]


class ReclusteringGroup(click.Group):
    """Command group whose usage errors exit with status 1"""

    def main(self, *args: Any, **kwargs: Any) -> NoReturn:  # type: ignore[override]
        kwargs["standalone_mode"] = False
        try:
            rv = super().main(*args, **kwargs)
        except click.UsageError as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except click.ClickException as e:
            e.show()
            sys.exit(e.exit_code)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)
        sys.exit(rv if isinstance(rv, int) else 0)


class TestCommandKwargs(TypedDict, total=False):
    """Type definition for test command kwargs from click"""

    data_file: Path
    y_column: str
    x_column: str
    controls: tuple[str, ...]
    fine: str
    gross: str
    intercept: bool | None
    tests: tuple[str, ...]
    alpha: float | None
    sided: str | None
    reps: int | None
    boot: int | None
    mc_draws: int | None
    seed: int | None
    seed_from_header: bool
    threads: int | None
    force: bool
    no_fe: bool
    cv1_convention: str | None
    statistic: str
    mode: str
    count_observed: bool | None
    draws_out: Path | None
    out: Path | None
    output_format: str
    verbose: bool


class TestCommandOptions(BaseModel):
    """Options for the 'test' command"""

    data_file: Path
    y_column: str
    x_column: str
    controls: tuple[str, ...] = ()
    fine: str
    gross: str
    intercept: bool | None = None
    tests: tuple[str, ...]
    alpha: float | None = None
    sided: Sidedness | None = None
    reps: int | None = None
    boot: int | None = None
    mc_draws: int | None = None
    seed: int | None = None
    seed_from_header: bool
    threads: int | None = None
    force: bool
    no_fe: bool
    cv1_convention: Convention | None = None
    statistic: StatisticName
    mode: ReclusterMode
    count_observed: bool | None = None
    draws_out: Path | None = None
    out: Path | None = None
    output_format: str
    verbose: bool

    @property
    def mapping(self) -> ColumnMapping:
        return ColumnMapping(
            y=self.y_column,
            x=self.x_column,
            controls=self.controls,
            fine=self.fine,
            gross=self.gross,
            intercept=self.intercept,
        )

    def config_overrides(self) -> dict[str, Any]:
        values = {
            "alpha": self.alpha,
            "sided": self.sided,
            "reps": self.reps,
            "boot": self.boot,
            "mc_draws": self.mc_draws,
            "seed": self.seed,
            "threads": self.threads,
            "cv1_convention": self.cv1_convention,
            "count_observed": self.count_observed,
        }
        if self.no_fe:
            values["absorb_fine_fe"] = False
        return values


class ScenarioOverrides(BaseModel):
    """Command-line values that replace the settings of every selected cell"""

    model_config = ConfigDict(extra="forbid")

    iterations: int | None = None
    rho_u: float | None = None
    rho_x: float | None = None
    model: DGPModel | None = None
    mix_weights: MixWeights | None = None
    fine_reorder: bool | None = None
    absorb_fine_fe: bool | None = None
    tests: tuple[str, ...] = ()
    alpha: float | None = None
    reps: int | None = None
    boot: int | None = None
    mc_draws: int | None = None

    def apply(self, scenario: Scenario) -> Scenario:
        dgp: dict[str, Any] = {}
        if self.rho_u is not None:
            dgp |= {"rho_u_gross": self.rho_u, "rho_u_fine": self.rho_u}
        if self.rho_x is not None:
            dgp |= {"rho_x_gross": self.rho_x, "rho_x_fine": self.rho_x}
        for key in ("model", "mix_weights", "fine_reorder"):
            if getattr(self, key) is not None:
                dgp[key] = getattr(self, key)

        update: dict[str, Any] = {
            key: getattr(self, key)
            for key in ("iterations", "absorb_fine_fe", "alpha", "reps", "boot", "mc_draws")
            if getattr(self, key) is not None
        }
        if self.tests:
            update["tests"] = list(self.tests)
        if dgp:
            update["dgp"] = scenario.dgp.model_copy(update=dgp)
        return scenario.model_copy(update=update)


def _setup_logging(level: str) -> None:
    """Route package logs through rich on stderr"""
    logger = logging.getLogger("reclustering")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = RichHandler(console=err_console, show_path=False, show_time=False, markup=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)


def _load_config(ctx: click.Context, verbose: bool, **overrides: Any) -> ReclusteringConfig:
    """Merged file configuration with command-line values on top"""
    config_path = ctx.obj.get("config") if ctx.obj else None
    config, _ = ConfigLoader.load_config(Path(config_path) if config_path else None)
    values = {key: value for key, value in overrides.items() if value is not None}
    if values:
        config = ConfigLoader.validate({**config.model_dump(), **values})
    _setup_logging("DEBUG" if verbose else config.log_level)
    return config


def _resolved(config: ReclusteringConfig, **extra: Any) -> dict[str, Any]:
    """JSON-ready configuration for audit headers"""
    values = config.model_dump()
    for key, value in extra.items():
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        values[key] = value
    return values


@click.group(cls=ReclusteringGroup)
@click.version_option(version=__version__, prog_name="reclustering")
@click.option("--config", type=click.Path(), help="Config file path")
@click.pass_context
def cli(ctx: click.Context, config: str | None) -> None:
    """reclustering - choose the clustering level for cluster-robust standard errors"""
    ctx.ensure_object(dict)
    ctx.obj["config"] = config


# --- test -------------------------------------------------------------------


@cli.command("test")
@click.argument("data_file", type=click.Path(path_type=Path))
@click.option("--y", "y_column", default="y", show_default=True, help="Outcome column")
@click.option("--x", "x_column", default="x", show_default=True, help="Target regressor column")
@click.option("--controls", multiple=True, help="Extra regressor column (repeatable)")
@click.option("--fine", default="fine", show_default=True, help="Fine cluster id column")
@click.option("--gross", default="gross", show_default=True, help="Gross cluster id column")
@click.option(
    "--intercept/--no-intercept",
    default=None,
    help="Add a constant (default: only when fine fixed effects are not absorbed)",
)
@click.option(
    "--test",
    "tests",
    multiple=True,
    type=click.Choice(TEST_CHOICES),
    default=("all",),
    show_default=True,
    help="Test to run (repeatable)",
)
@click.option("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True))
@click.option(
    "--sided",
    type=click.Choice(SIDED_CHOICES),
    help="Decision rule: two, one (upper tail) or lower (one-sided, lower tail)",
)
@click.option("--reps", type=click.IntRange(min=1), help="Random regroupings (CRSE test)")
@click.option("--boot", type=click.IntRange(min=1), help="Wild bootstrap resamples (SV test)")
@click.option("--mc-draws", type=click.IntRange(min=1), help="Monte Carlo draws (VMB, WCR)")
@click.option("--seed", type=click.IntRange(min=0), help="Master seed")
@click.option(
    "--seed-from-header",
    is_flag=True,
    help="Use the test seed recorded in the file's audit header (files from 'generate')",
)
@click.option("--threads", type=click.IntRange(min=1), help="Worker threads for resampling")
@click.option("--force", is_flag=True, help="Run the CRSE test on an infeasible structure")
@click.option("--no-fe", is_flag=True, help="Do not absorb fine-cluster fixed effects")
@click.option("--cv1-convention", type=click.Choice(["paper", "textbook"]))
@click.option(
    "--statistic",
    type=click.Choice(["crse", "sv"]),
    default="crse",
    show_default=True,
    help="Statistic the reclustering test permutes",
)
@click.option(
    "--mode",
    type=click.Choice(["auto", "monte-carlo", "exhaustive"]),
    default="auto",
    show_default=True,
    help="Random regroupings or full enumeration",
)
@click.option("--count-observed/--no-count-observed", default=None, help="p-value convention")
@click.option("--draws-out", type=click.Path(path_type=Path), help="CSV dump of the CRSE draws")
@click.option("--out", type=click.Path(path_type=Path), help="CSV file for the test results")
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["table", "csv"]),
    default="table",
    show_default=True,
    help="Standard output format",
)
@click.option("--verbose", is_flag=True, help="Debug logging and detailed errors")
@click.pass_context
def test_command(ctx: click.Context, **kwargs: Unpack[TestCommandKwargs]) -> None:
    """Test whether fine-level clustering suffices for a dataset"""
    options = TestCommandOptions(**kwargs)
    try:
        overrides = options.config_overrides()
        if options.seed_from_header:
            overrides["seed"] = _header_seed(options.data_file)
        config = _load_config(ctx, options.verbose, **overrides)
        results, summary = _run_tests(options, config)

        header = AuditHeader(
            __version__,
            config.seed,
            _resolved(
                config,
                data_file=options.data_file,
                mapping=options.mapping.model_dump(mode="json"),
                tests=options.tests,
                statistic=options.statistic,
                mode=options.mode,
                force=options.force,
            ),
        )
        frame = _results_frame(results)
        if options.out is not None:
            write_frame_to(frame, options.out, sys.stdout, header)
        if options.draws_out is not None:
            _write_draws(results, options.draws_out, header)

        if options.output_format == "csv":
            if options.out is None:
                write_frame_to(frame, None, sys.stdout, header)
        else:
            click.echo("\n".join(header.lines()))
            _display_summary(summary)
            _display_results(results)

    except ReclusteringError as e:
        _handle_reclustering_error(ctx, e, options.verbose)
    except Exception as e:
        _handle_unexpected_error(ctx, e, options.verbose)


def _header_seed(path: Path) -> int:
    values = read_audit_header(path)
    if "test_seed" not in values:
        raise ConfigurationError(
            f"{path} has no 'test_seed' audit line",
            config_key="seed",
            suggestions=["Pass --seed explicitly"],
        )
    return int(values["test_seed"])


def _run_tests(
    options: TestCommandOptions, config: ReclusteringConfig
) -> tuple[dict[str, TestResult], CoefficientSummary]:
    data = read_dataset(options.data_file, options.mapping, config.absorb_fine_fe)
    settings = config.test_settings(
        statistic=options.statistic, recluster_mode=options.mode, force=options.force
    )
    fit = ols_fit(data)

    def progress_callback(event: str, **kwargs: Any) -> None:
        if event == "test_start" and options.output_format == "table":
            err_console.print(f"🔄 [{kwargs['current']}/{kwargs['total']}] {kwargs['name']}")

    # crse runs first and checks feasibility, so an infeasible structure exits 3 here
    results = run_battery(data, options.tests, settings, config.seed, progress_callback, fit=fit)
    return results, coefficient_summary(fit, data.structure, data.target_name)


def _decision_label(result: TestResult) -> str:
    if result.decision is None:
        return "withheld"
    return "reject" if result.decision else "no-reject"


def _results_frame(results: dict[str, TestResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "test": name,
                "method": result.method,
                "mode": result.mode,
                "statistic": result.statistic,
                "p_value": result.p_value,
                "alpha": result.alpha,
                "sided": result.sided,
                "decision": _decision_label(result),
                "degenerate": result.degenerate,
                "n_draws": result.n_draws,
                "dropped": result.dropped,
            }
            for name, result in results.items()
        ]
    )


def _write_draws(results: dict[str, TestResult], path: Path, header: AuditHeader) -> None:
    if "crse" not in results:
        raise ConfigurationError(
            "--draws-out needs the crse test", suggestions=["Add --test crse"]
        )
    result = results["crse"]
    write_frame_to(draws_frame(result.draws, result.statistic), path, sys.stdout, header)


def _display_summary(summary: CoefficientSummary) -> None:
    table = Table(title="Coefficient")
    for column in ("name", "estimate", "se fine", "p fine", "se gross", "p gross"):
        table.add_column(column, justify="left" if column == "name" else "right")
    table.add_row(
        summary.name,
        f"{summary.estimate:.6g}",
        f"{summary.se_fine:.6g}",
        f"{summary.p_fine:.4f}",
        f"{summary.se_gross:.6g}",
        f"{summary.p_gross:.4f}",
    )
    console.print(table)
    console.print(f"{summary.n_fine} fine clusters, {summary.n_gross} gross clusters")


def _display_results(results: dict[str, TestResult]) -> None:
    table = Table(title="Tests")
    for column in ("test", "method", "mode", "statistic", "p-value", "draws", "decision"):
        table.add_column(column, justify="right" if column in {"statistic", "p-value"} else "left")
    for name, result in results.items():
        table.add_row(
            name,
            result.method,
            result.mode,
            f"{result.statistic:.6g}",
            f"{result.p_value:.4f}",
            str(result.n_draws),
            _decision_label(result),
        )
    console.print(table)

    crse = results.get("crse")
    if crse is not None and crse.decision is not None:
        verdict = (
            "cluster at the gross level"
            if crse.decision
            else "fine-level clustering is not rejected"
        )
        console.print(f"CRSE test: {verdict}")


# --- simulate ---------------------------------------------------------------


class SimulateCommandKwargs(TypedDict, total=False):
    """Type definition for simulate command kwargs from click"""

    preset: str | None
    scenario_file: Path | None
    cells: tuple[int, ...]
    z: int | None
    rho_u: float | None
    rho_x: float | None
    model: str | None
    mix_weights: str | None
    fine_reorder: bool | None
    no_fe: bool
    tests: tuple[str, ...]
    alpha: float | None
    reps: int | None
    boot: int | None
    mc_draws: int | None
    seed: int | None
    threads: int | None
    cv1_convention: str | None
    out: Path | None
    dump: Path | None
    quiet: bool
    verbose: bool


def _scenario_options(func: Any) -> Any:
    """Options shared by commands that pick and adjust scenario cells"""
    options = [
        click.option("--preset", help="Named scenario grid (see 'reclustering presets')"),
        click.option(
            "--scenario",
            "scenario_file",
            type=click.Path(path_type=Path),
            help="YAML scenario file",
        ),
        click.option(
            "--rho-u", type=click.FloatRange(0, 1, max_open=True), help="Error correlation"
        ),
        click.option(
            "--rho-x", type=click.FloatRange(0, 1, max_open=True), help="Regressor correlation"
        ),
        click.option("--model", type=click.Choice(["ar1", "hidden-factor"]), help="DGP model"),
        click.option("--mix-weights", type=click.Choice(["paper", "unit-variance"])),
        click.option("--fine-reorder/--no-fine-reorder", default=None),
        click.option("--no-fe", is_flag=True, help="Do not absorb fine-cluster fixed effects"),
        click.option("--seed", type=click.IntRange(min=0), help="Master seed"),
        click.option("--verbose", is_flag=True, help="Debug logging and detailed errors"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _load_scenarios(
    preset: str | None, scenario_file: Path | None, config: ReclusteringConfig
) -> tuple[str, list[Scenario]]:
    """Cells of a preset or scenario file, configuration defaults applied"""
    if preset and scenario_file:
        raise ConfigurationError("Use either --preset or --scenario, not both")
    if scenario_file is not None:
        return scenario_file.stem, load_scenario_file(scenario_file, config)

    name = preset or "baseline"
    presets = scenario_presets()
    if name not in presets:
        raise ConfigurationError(
            f"Unknown preset '{name}'. Available presets: {', '.join(presets)}",
            config_key="preset",
        )
    return name, [apply_config(scenario, config) for scenario in presets[name]]


def _select_cells(scenarios: list[Scenario], cells: tuple[int, ...]) -> list[tuple[int, Scenario]]:
    """(index, scenario) pairs; the index keeps its seeds when cells are run alone"""
    if not cells:
        return list(enumerate(scenarios))
    selected = []
    for index in cells:
        if not 0 <= index < len(scenarios):
            raise ConfigurationError(
                f"Cell {index} out of range: this grid has {len(scenarios)} cells",
                config_key="cell",
            )
        selected.append((index, scenarios[index]))
    return selected


@cli.command()
@_scenario_options
@click.option("--cell", "cells", multiple=True, type=click.IntRange(min=0), help="Cell index")
@click.option("--z", type=click.IntRange(min=1), help="Iterations per cell")
@click.option(
    "--test", "tests", multiple=True, type=click.Choice(TEST_CHOICES), help="Test to run"
)
@click.option("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True))
@click.option("--reps", type=click.IntRange(min=1), help="Random regroupings (CRSE test)")
@click.option("--boot", type=click.IntRange(min=1), help="Wild bootstrap resamples (SV test)")
@click.option("--mc-draws", type=click.IntRange(min=1), help="Monte Carlo draws (VMB, WCR)")
@click.option("--threads", type=click.IntRange(min=1), help="Worker processes")
@click.option("--cv1-convention", type=click.Choice(["paper", "textbook"]))
@click.option("--out", type=click.Path(path_type=Path), help="Rejection-rate CSV")
@click.option("--dump", type=click.Path(path_type=Path), help="Per-iteration CSV")
@click.option("--quiet", is_flag=True, help="No progress output")
@click.pass_context
def simulate(ctx: click.Context, **kwargs: Unpack[SimulateCommandKwargs]) -> None:
    """Estimate rejection rates of the tests by Monte Carlo simulation"""
    verbose = bool(kwargs.get("verbose"))
    try:
        config = _load_config(
            ctx,
            verbose,
            seed=kwargs.get("seed"),
            threads=kwargs.get("threads"),
            alpha=kwargs.get("alpha"),
            cv1_convention=kwargs.get("cv1_convention"),
            mix_weights=kwargs.get("mix_weights"),
        )
        overrides = _overrides_from(kwargs, iterations=kwargs.get("z"))
        run_name, scenarios = _load_scenarios(
            kwargs.get("preset"), kwargs.get("scenario_file"), config
        )
        cells = [
            (index, overrides.apply(scenario))
            for index, scenario in _select_cells(scenarios, kwargs.get("cells", ()))
        ]
        reports = _run_cells(run_name, cells, config, bool(kwargs.get("quiet")))

        header = AuditHeader(
            __version__,
            config.seed,
            _resolved(
                config,
                run=run_name,
                cells=[index for index, _ in cells],
                overrides=overrides.model_dump(mode="json", exclude_defaults=True),
            ),
        )
        out = kwargs.get("out")
        rows = pd.DataFrame([row for report in reports for row in report.to_rows()])
        write_frame_to(rows, out, sys.stdout, header)
        dump = kwargs.get("dump")
        if dump is not None:
            iterations = pd.DataFrame(
                [row for report in reports for row in report.iteration_rows()]
            )
            write_frame_to(iterations, dump, sys.stdout, header)
        if out is not None:
            _display_rates(reports)

    except ReclusteringError as e:
        _handle_reclustering_error(ctx, e, verbose)
    except Exception as e:
        _handle_unexpected_error(ctx, e, verbose)


def _overrides_from(kwargs: SimulateCommandKwargs, iterations: int | None) -> ScenarioOverrides:
    return ScenarioOverrides(
        iterations=iterations,
        rho_u=kwargs.get("rho_u"),
        rho_x=kwargs.get("rho_x"),
        model=kwargs.get("model"),
        mix_weights=kwargs.get("mix_weights"),
        fine_reorder=kwargs.get("fine_reorder"),
        absorb_fine_fe=False if kwargs.get("no_fe") else None,
        tests=kwargs.get("tests", ()),
        alpha=kwargs.get("alpha"),
        reps=kwargs.get("reps"),
        boot=kwargs.get("boot"),
        mc_draws=kwargs.get("mc_draws"),
    )


def _run_cells(
    run_name: str,
    cells: list[tuple[int, Scenario]],
    config: ReclusteringConfig,
    quiet: bool,
) -> list[RejectionReport]:
    settings = config.test_settings()
    manager = ProgressManager(console=err_console, enabled=not quiet)
    reports = []
    with manager.simulation_progress(run_name, len(cells)):
        for index, scenario in cells:
            reports.append(
                run_scenario(
                    scenario,
                    settings,
                    config.seed,
                    cell=index,
                    workers=config.threads,
                    progress_callback=manager.callback,
                )
            )
    return reports


def _display_rates(reports: list[RejectionReport]) -> None:
    table = Table(title="Rejection rates")
    for column in ("cell", "test", "rate", "mc se", "z", "degenerate"):
        table.add_column(column, justify="left" if column in {"cell", "test"} else "right")
    for report in reports:
        for rate in report.rates.values():
            table.add_row(
                report.scenario.name,
                rate.test,
                f"{rate.rate:.4f}",
                f"{rate.mc_se:.4f}",
                str(rate.iterations),
                str(rate.degenerate),
            )
    console.print(table)


# --- generate ---------------------------------------------------------------


@cli.command()
@_scenario_options
@click.option("--cell", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--iteration", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), help="CSV file (default: stdout)")
@click.pass_context
def generate(ctx: click.Context, cell: int, iteration: int, out: Path | None, **kwargs: Any) -> None:
    """Write the dataset one simulation iteration would test"""
    verbose = bool(kwargs.get("verbose"))
    try:
        config = _load_config(
            ctx, verbose, seed=kwargs.get("seed"), mix_weights=kwargs.get("mix_weights")
        )
        overrides = _overrides_from(kwargs, iterations=None)  # type: ignore[arg-type]
        run_name, scenarios = _load_scenarios(
            kwargs.get("preset"), kwargs.get("scenario_file"), config
        )
        [(index, scenario)] = _select_cells(scenarios, (cell,))
        scenario = overrides.apply(scenario)

        structure = scenario.structure.build()
        data, test_seed = simulate_dataset(scenario, structure, config.seed, index, iteration)
        header = AuditHeader(
            __version__,
            config.seed,
            _resolved(
                config,
                run=run_name,
                overrides=overrides.model_dump(mode="json", exclude_defaults=True),
            ),
            extra=(
                ("cell", scenario.name),
                ("cell_index", str(index)),
                ("iteration", str(iteration)),
                ("test_seed", str(test_seed)),
            ),
        )
        write_frame_to(dataset_frame(data), out, sys.stdout, header)
        if out is not None:
            err_console.print(f"💾 {scenario.name} iteration {iteration} written to: {out}")
            err_console.print(f"🎲 Test seed: {test_seed}")

    except ReclusteringError as e:
        _handle_reclustering_error(ctx, e, verbose)
    except Exception as e:
        _handle_unexpected_error(ctx, e, verbose)


# --- partitions and presets ---------------------------------------------------


def _parse_sizes(n_gross: int, fines: str) -> list[int]:
    try:
        sizes = [int(part) for part in fines.split(",")]
    except ValueError as e:
        raise click.BadParameter(f"'{fines}' is not an integer list", param_hint="--ng") from e
    if len(sizes) == 1:
        sizes = sizes * n_gross
    if len(sizes) != n_gross:
        raise click.BadParameter(
            f"{len(sizes)} sizes given for {n_gross} gross clusters", param_hint="--ng"
        )
    if any(size < 1 for size in sizes):
        raise click.BadParameter("every gross cluster needs a fine cluster", param_hint="--ng")
    return sizes


@cli.command()
@click.option("-g", "--gross", "n_gross", type=click.IntRange(min=1), required=True)
@click.option(
    "--ng",
    "fines",
    required=True,
    help="Fine clusters per gross cluster: one value or a comma-separated list",
)
@click.option("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True))
@click.option("--sided", type=click.Choice(SIDED_CHOICES))
@click.pass_context
def partitions(
    ctx: click.Context, n_gross: int, fines: str, alpha: float | None, sided: str | None
) -> None:
    """Count distinct partitions and check whether the CRSE test can reject"""
    sizes = _parse_sizes(n_gross, fines)
    try:
        config = _load_config(ctx, False, alpha=alpha, sided=sided)
        structure = ClusterStructure.from_sizes([[1] * size for size in sizes])
        result = feasibility(structure, config.alpha, config.sided)

        click.echo(f"r* = {result.partitions}")
        regroupings = count_regroupings(structure)
        if regroupings != result.partitions:
            click.echo(f"distinct regroupings = {regroupings}")
        rule = sided_label(result.sided)
        click.echo(f"needed = {result.required:g} ({rule}, alpha = {result.alpha:g})")
        click.echo(f"verdict: {'feasible' if result.feasible else 'infeasible'}")

    except ReclusteringError as e:
        _handle_reclustering_error(ctx, e, False)


@cli.command()
def presets() -> None:
    """List the named scenario grids"""
    table = Table(title="Presets")
    table.add_column("preset")
    table.add_column("cells", justify="right")
    table.add_column("cell names")
    for name, cells in scenario_presets().items():
        names = ", ".join(f"{i}: {cell.name}" for i, cell in enumerate(cells))
        table.add_row(name, str(len(cells)), names)
    console.print(table)
    names = ", ".join(get_global_registry().get_registered_names())
    console.print(f"Tests: {names}")


# --- config -----------------------------------------------------------------


@cli.group()
def config() -> None:
    """Configuration management"""
    pass


@config.command()
@click.option("--path", type=click.Path(), help="Configuration file path")
@click.option("--global", "global_config", is_flag=True, help="Create global configuration")
@click.option("--yes", is_flag=True, help="Overwrite an existing file without asking")
@click.pass_context
def init(ctx: click.Context, path: str | None, global_config: bool, yes: bool) -> None:
    """Initialize configuration"""
    if path:
        config_path = Path(path)
    elif global_config:
        config_path = Path.home() / ".config" / "reclustering" / "config.yml"
    else:
        config_path = Path.cwd() / "reclustering.yml"

    if config_path.exists() and not yes:
        err_console.print(f"⚠️ Configuration file already exists: {config_path}")
        if not click.confirm("Overwrite existing configuration?"):
            return

    try:
        ConfigLoader.create_default_config(config_path)
    except OSError as e:
        err_console.print(f"❌ Failed to create configuration: {e}", style="red")
        ctx.exit(EXIT_USAGE)
    console.print(f"✅ Configuration initialized: {config_path}")


@config.command()
@click.option("--path", type=click.Path(), help="Configuration file path")
@click.pass_context
def show(ctx: click.Context, path: str | None) -> None:
    """Show the resolved configuration and the files it came from"""
    try:
        resolved, config_files = ConfigLoader.load_config(Path(path) if path else None)
    except ReclusteringError as e:
        _handle_reclustering_error(ctx, e, False)

    if config_files:
        console.print("📁 Configuration files (later override earlier):")
        for config_file in config_files:
            console.print(f"  - {config_file}")
    else:
        console.print("📁 No configuration files found (using defaults)")
    console.print(json.dumps(resolved.model_dump(), indent=2, sort_keys=True))


# --- errors -----------------------------------------------------------------


def _handle_reclustering_error(
    ctx: click.Context, error: ReclusteringError, verbose: bool
) -> NoReturn:
    """Handle ReclusteringError with its exit code"""
    error_msg = ErrorReporter.format_error_for_cli(error, verbose)
    err_console.print(error_msg, style="bold red")
    ctx.exit(error.exit_code)


def _handle_unexpected_error(ctx: click.Context, error: Exception, verbose: bool) -> NoReturn:
    """Handle unexpected errors"""
    if verbose:
        err_console.print_exception()
    _handle_reclustering_error(ctx, create_error_from_exception(error), verbose)


def main() -> None:
    """Entry point for CLI"""
    cli()
