"""Competitor tests of fine- against gross-level clustering

- SV: variance difference between gross and fine clustering, wild cluster bootstrap
  under fine-level clustering.
- VMB: spread of per-gross-cluster estimates, parametric Monte Carlo with
  fine-clustered per-cluster standard errors.
- WCR: net sign count of fine-cluster scores within gross clusters, sign randomization.

Each test reports the upper-tail share of resampled statistics above the observed one.
"""

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .cluster_model import ClusterStructure, IntArray
from .exceptions import ConfigurationError, DataError, ErrorContext
from .regression import (
    Dataset,
    FloatArray,
    RegressionFit,
    aggregate_scores,
    gross_sums_many,
    ols_fit,
)
from .resampling import BlockDraw, SeedLike, Sidedness, run_blocks
from .results import TestResult
from .variance import Convention, sandwich

logger = logging.getLogger(__name__)

type ResamplingMethod = Literal["wild-cluster-bootstrap", "parametric-mc", "sign-randomization"]

DEFAULT_BOOT = 999
DEFAULT_MC_DRAWS = 1000


@dataclass(frozen=True)
class ResamplingPlan:
    """How a competitor test builds its null distribution"""

    method: ResamplingMethod
    draws: int = DEFAULT_BOOT
    seed: SeedLike = 0
    alpha: float = 0.05
    sided: Sidedness = "two"
    keys: tuple[int, ...] = field(default=())
    workers: int = 1

    def __post_init__(self) -> None:
        if self.draws < 1:
            raise ConfigurationError(
                f"Resample count must be at least 1, got {self.draws}", config_key="boot"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}", "alpha")

    @property
    def report_seed(self) -> int | None:
        return self.seed if isinstance(self.seed, int) else None

    def run(self, draw_block: BlockDraw) -> FloatArray:
        return run_blocks(
            self.draws, self.seed, draw_block, keys=self.keys, workers=self.workers
        )


def _indicator(gross_map: IntArray, n_gross: int) -> FloatArray:
    """f-bar x g-bar membership matrix"""
    return np.eye(n_gross)[gross_map]


# --- SV ---------------------------------------------------------------------


def sv_statistic(
    scores: FloatArray, structure: ClusterStructure, gross_map: IntArray | None = None
) -> float:
    """D = sum_g S_g^2 - sum_f S_f^2 on raw HC1 scores, without CV1 factors"""
    fine = aggregate_scores(scores, structure, "fine")
    gross = aggregate_scores(scores, structure, "gross", gross_map)
    return float(np.dot(gross, gross) - np.dot(fine, fine))


class SvStatistic:
    """Variance difference as a statistic for the reclustering engine"""

    name = "sv"

    def __init__(self, fit: RegressionFit, structure: ClusterStructure) -> None:
        self.structure = structure
        self.fine_sums = aggregate_scores(fit.scores, structure, "fine")
        self._fine_total = float(np.dot(self.fine_sums, self.fine_sums))

    def __call__(self, gross_map: IntArray) -> float:
        return float(self.evaluate_many(np.asarray(gross_map)[None, :])[0])

    def evaluate_many(self, gross_maps: IntArray) -> FloatArray:
        sums = gross_sums_many(self.fine_sums, gross_maps, self.structure.n_gross)
        return np.einsum("ij,ij->i", sums, sums) - self._fine_total


def sv_test(data: Dataset, fit: RegressionFit, plan: ResamplingPlan) -> TestResult:
    """Wild cluster bootstrap of D with one Rademacher weight per fine cluster

    The resampled outcome X beta_hat + v_f u_hat is refitted on the fixed design, so each
    resample's fine-cluster score sums are linear in the weights and cost O(f-bar) to form.
    Resamples with non-finite statistics are dropped and counted.
    """
    structure = data.structure
    fine, n_fine = structure.unit_to_fine, structure.n_fine
    h = fit.hc1_factor
    x_tilde, u_hat, basis = fit.partialled_target, fit.residuals, fit.design_basis

    def fine_sum(values: FloatArray) -> FloatArray:
        return np.bincount(fine, weights=values, minlength=n_fine)

    a = fine_sum(x_tilde * u_hat)
    # Projection terms of the refit residual: B[f, j] = sum U_ij u_i, C[f, j] = sum x~_i U_ij
    B = np.column_stack([fine_sum(basis[:, j] * u_hat) for j in range(basis.shape[1])])
    C = np.column_stack([fine_sum(basis[:, j] * x_tilde) for j in range(basis.shape[1])])
    membership = _indicator(structure.fine_to_gross, structure.n_gross)

    observed = sv_statistic(fit.scores, structure)

    def draw_block(rng: np.random.Generator, size: int) -> FloatArray:
        weights = rng.choice(np.array([-1.0, 1.0]), size=(size, n_fine))
        fine_sums = h * (weights * a - (weights @ B) @ C.T)
        gross_sums = fine_sums @ membership
        return np.einsum("ij,ij->i", gross_sums, gross_sums) - np.einsum(
            "ij,ij->i", fine_sums, fine_sums
        )

    draws = plan.run(draw_block)
    finite = np.isfinite(draws)
    dropped = int((~finite).sum())
    if dropped:
        logger.warning(f"SV bootstrap dropped {dropped} of {draws.shape[0]} resamples")

    return TestResult.from_draws(
        method="sv",
        mode=plan.method,
        statistic=observed,
        draws=draws[finite],
        alpha=plan.alpha,
        sided=plan.sided,
        seed=plan.report_seed,
        dropped=dropped,
    )


# --- VMB --------------------------------------------------------------------


def vmb_statistic(per_gross_betas: FloatArray, n: int) -> float:
    """n / (g(g-1)) * sum_g (beta_g - mean beta)^2"""
    betas = np.asarray(per_gross_betas, dtype=np.float64)
    n_gross = betas.shape[-1]
    if n_gross < 2:
        raise DataError(f"VMB statistic needs at least two gross clusters, got {n_gross}")
    deviations = betas - betas.mean(axis=-1, keepdims=True)
    return float(n / (n_gross * (n_gross - 1)) * np.sum(deviations**2))


def _vmb_many(betas: FloatArray, n: int) -> FloatArray:
    n_gross = betas.shape[1]
    deviations = betas - betas.mean(axis=1, keepdims=True)
    return n / (n_gross * (n_gross - 1)) * np.einsum("ij,ij->i", deviations, deviations)


def per_gross_estimates(
    data: Dataset, convention: Convention = "paper"
) -> tuple[FloatArray, FloatArray]:
    """Target estimate and its fine-clustered standard error within every gross cluster

    Raises:
        DataError: a gross cluster with fewer than two fine clusters, a failed
            per-cluster fit, or a zero standard error
    """
    structure = data.structure
    betas = np.empty(structure.n_gross)
    ses = np.empty(structure.n_gross)
    for gross in range(structure.n_gross):
        label = structure.gross_labels[gross] if structure.gross_labels else gross
        if structure.gross_sizes[gross] < 2:
            raise DataError(
                f"Gross cluster {label!r} has {structure.gross_sizes[gross]} fine cluster; "
                "a fine-clustered standard error needs at least two",
                context=ErrorContext(function_name="vmb_test"),
            )
        sub = data.restrict_to_gross(gross)
        try:
            sub_fit = ols_fit(sub)
        except DataError as e:
            raise DataError(
                f"Regression within gross cluster {label!r} failed: {e.message}",
                context=ErrorContext(function_name="vmb_test"),
                original_error=e,
            ) from e
        betas[gross] = sub_fit.beta_k
        ses[gross] = sandwich(sub_fit, sub.structure, "fine", convention).se
        if ses[gross] == 0.0:
            raise DataError(
                f"Fine-clustered standard error is zero in gross cluster {label!r}",
                context=ErrorContext(function_name="vmb_test"),
            )
    return betas, ses


def vmb_test(
    data: Dataset, plan: ResamplingPlan, convention: Convention = "paper"
) -> TestResult:
    """Parametric Monte Carlo: beta_g ~ N(mean beta, se_g^2) independently"""
    betas, ses = per_gross_estimates(data, convention)
    observed = vmb_statistic(betas, data.n)
    center = float(betas.mean())

    def draw_block(rng: np.random.Generator, size: int) -> FloatArray:
        simulated = rng.normal(center, ses, size=(size, betas.shape[0]))
        return _vmb_many(simulated, data.n)

    draws = plan.run(draw_block)
    return TestResult.from_draws(
        method="vmb",
        mode=plan.method,
        statistic=observed,
        draws=draws,
        alpha=plan.alpha,
        sided=plan.sided,
        seed=plan.report_seed,
        details={"per_gross_beta": betas.tolist(), "per_gross_se": ses.tolist()},
    )


# --- WCR --------------------------------------------------------------------


def wcr_statistic(
    fine_scores: FloatArray, structure: ClusterStructure, gross_map: IntArray | None = None
) -> float:
    """Mean over gross clusters of |#positive - #negative| member fine-cluster scores"""
    if gross_map is None:
        gross_map = structure.fine_to_gross
    net = np.bincount(gross_map, weights=np.sign(fine_scores), minlength=structure.n_gross)
    return float(np.abs(net).mean())


def wcr_test(data: Dataset, fit: RegressionFit, plan: ResamplingPlan) -> TestResult:
    """Sign randomization: each fine cluster's sign flips independently with probability 1/2"""
    structure = data.structure
    signs = np.sign(aggregate_scores(fit.scores, structure, "fine"))
    observed = wcr_statistic(signs, structure)
    membership = _indicator(structure.fine_to_gross, structure.n_gross)

    def draw_block(rng: np.random.Generator, size: int) -> FloatArray:
        flips = rng.choice(np.array([-1.0, 1.0]), size=(size, structure.n_fine))
        return np.abs((flips * signs) @ membership).mean(axis=1)

    draws = plan.run(draw_block)
    return TestResult.from_draws(
        method="wcr",
        mode=plan.method,
        statistic=observed,
        draws=draws,
        alpha=plan.alpha,
        sided=plan.sided,
        seed=plan.report_seed,
    )
