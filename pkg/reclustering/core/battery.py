"""Test battery: fit once, run every requested test on the same fit

The same entry point serves the ``test`` command and each simulation iteration, so a
dataset written by ``generate`` and re-tested with the recorded seed reproduces the
simulator's results.
"""

import logging
from collections.abc import Callable, Sequence

from .alt_tests import (
    ResamplingMethod,
    ResamplingPlan,
    SvStatistic,
    sv_test,
    vmb_test,
    wcr_test,
)
from .exceptions import DataError, ErrorContext, ReclusteringError
from .recluster import ReclusterStatistic, check_feasible, recluster_test
from .regression import Dataset, RegressionFit, ols_fit
from .resampling import SeedLike
from .results import TestResult
from .test_registry import (
    StatisticName,
    TestContext,
    TestSettings,
    get_global_registry,
    registered_test,
)
from .variance import Convention, CrseStatistic

logger = logging.getLogger(__name__)

type ProgressCallback = Callable[..., None]
type BatteryResults = dict[str, TestResult]


def make_statistic(
    name: StatisticName,
    fit: RegressionFit,
    data: Dataset,
    convention: Convention = "paper",
) -> ReclusterStatistic:
    """Gross-cluster-sensitive statistic for the reclustering engine"""
    if name == "crse":
        return CrseStatistic(fit, data.structure, convention)
    if name == "sv":
        return SvStatistic(fit, data.structure)
    raise DataError(f"Unknown reclustering statistic '{name}'")


@registered_test("crse", key=0, description="Reclustering permutation test of the CRSE")
def run_recluster(context: TestContext) -> TestResult:
    settings = context.settings
    structure = context.data.structure
    if settings.check_feasibility:
        check_feasible(structure, settings.alpha, settings.sided, settings.force)
    statistic = make_statistic(
        settings.statistic, context.fit, context.data, settings.cv1_convention
    )
    return recluster_test(
        statistic,
        structure,
        settings.reps,
        context.seed,
        settings.alpha,
        settings.sided,
        mode=settings.recluster_mode,
        keys=context.keys,
        cap=settings.exhaustive_cap,
        count_observed=settings.count_observed,
        workers=settings.threads,
    )


def _plan(context: TestContext, method: ResamplingMethod, draws: int) -> ResamplingPlan:
    settings = context.settings
    return ResamplingPlan(
        method=method,
        draws=draws,
        seed=context.seed,
        alpha=settings.alpha,
        sided=settings.sided,
        keys=context.keys,
        workers=settings.threads,
    )


@registered_test("sv", key=1, description="Variance-difference test, wild cluster bootstrap")
def run_sv(context: TestContext) -> TestResult:
    plan = _plan(context, "wild-cluster-bootstrap", context.settings.boot)
    return sv_test(context.data, context.fit, plan)


@registered_test("vmb", key=2, description="Between-cluster estimate spread, parametric MC")
def run_vmb(context: TestContext) -> TestResult:
    plan = _plan(context, "parametric-mc", context.settings.mc_draws)
    return vmb_test(context.data, plan, context.settings.cv1_convention)


@registered_test("wcr", key=3, description="Within-cluster sign test, sign randomization")
def run_wcr(context: TestContext) -> TestResult:
    plan = _plan(context, "sign-randomization", context.settings.mc_draws)
    return wcr_test(context.data, context.fit, plan)


def run_battery(
    data: Dataset,
    tests: Sequence[str],
    settings: TestSettings,
    seed: SeedLike,
    progress_callback: ProgressCallback | None = None,
    fit: RegressionFit | None = None,
) -> BatteryResults:
    """Fit the model once and run each requested test on its own substream of ``seed``

    Raises:
        ReclusteringError: from the fit or any test, with the test name attached
    """
    registry = get_global_registry()
    selected = registry.resolve(tuple(tests))
    if fit is None:
        fit = ols_fit(data)

    results: BatteryResults = {}
    for index, test in enumerate(selected, 1):
        if progress_callback:
            progress_callback("test_start", current=index, total=len(selected), name=test.name)

        context = TestContext(data, fit, settings, seed, keys=(test.key,))
        try:
            results[test.name] = test.runner(context)
        except ReclusteringError as e:
            e.context.test_name = e.context.test_name or test.name
            raise
        except Exception as e:
            raise DataError(
                f"Test '{test.name}' failed: {e}",
                context=ErrorContext(test_name=test.name, function_name="run_battery"),
                original_error=e,
            ) from e

        result = results[test.name]
        logger.debug(
            f"{test.name}: statistic={result.statistic:.6g}, p={result.p_value:.4f}, "
            f"decision={result.decision}"
        )
        if progress_callback:
            progress_callback("test_done", current=index, total=len(selected), result=result)

    return results
