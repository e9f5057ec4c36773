"""Naive and cluster-robust sandwich variances of the target coefficient

Two conventions for the small-sample factors:

- ``paper``: scores carry the HC1 factor n/(n-k_bar) and the summed cluster score
  carries the CV1 factor c = G(n-1)/((G-1)n), both before squaring.
- ``textbook``: both factors enter the variance once, G/(G-1) * (n-1)/(n-k_bar),
  as in standard regression software.

The factors are constant across regroupings of a fixed structure, so reclustering
p-values do not depend on the convention.
"""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import stats

from .cluster_model import ClusterStructure, IntArray
from .exceptions import DataError
from .regression import FloatArray, RegressionFit, aggregate_scores, gross_sums_many

logger = logging.getLogger(__name__)

type Convention = Literal["paper", "textbook"]
type VarianceLevel = Literal["naive", "fine", "gross"]


@dataclass(frozen=True)
class SandwichEstimate:
    """Target-coefficient sandwich at one clustering level"""

    sigma_hat: float
    variance: float
    se: float
    level: VarianceLevel


def cv1_factor(n_clusters: int, n: int) -> float:
    """c = G(n-1) / ((G-1)n)"""
    if n_clusters < 2:
        raise DataError(
            f"CV1 factor undefined with {n_clusters} cluster(s)",
            suggestions=["Cluster-robust variances need at least two clusters"],
        )
    return n_clusters * (n - 1) / ((n_clusters - 1) * n)


def _cluster_weight(n_clusters: int, n: int, convention: Convention, hc1_factor: float) -> float:
    """Multiplier of sum_g S_g^2 for HC1-scaled cluster sums S_g"""
    c = cv1_factor(n_clusters, n)
    if convention == "paper":
        return c * c
    return c / hc1_factor


def sigma_naive(
    scores: FloatArray, convention: Convention = "paper", hc1_factor: float = 1.0
) -> float:
    """sum_i s_i^2 for HC1-scaled scores"""
    total = float(np.dot(scores, scores))
    return total if convention == "paper" else total / hc1_factor


def sigma_cr(
    scores: FloatArray,
    structure: ClusterStructure,
    level: Literal["fine", "gross"] = "gross",
    gross_map: IntArray | None = None,
    convention: Convention = "paper",
    hc1_factor: float = 1.0,
) -> float:
    """Cluster-robust score outer-product sum at fine or gross level

    Raises:
        DataError: fewer than two clusters at the requested level
    """
    sums = aggregate_scores(scores, structure, level, gross_map)
    n_clusters = structure.n_fine if level == "fine" else structure.n_gross
    weight = _cluster_weight(n_clusters, structure.n, convention, hc1_factor)
    return weight * float(np.dot(sums, sums))


def sandwich(
    fit: RegressionFit,
    structure: ClusterStructure,
    level: VarianceLevel = "gross",
    convention: Convention = "paper",
    gross_map: IntArray | None = None,
) -> SandwichEstimate:
    """V_kk = xtx_inv_kk * Sigma_kk * xtx_inv_kk"""
    if level == "naive":
        sigma = sigma_naive(fit.scores, convention, fit.hc1_factor)
    else:
        sigma = sigma_cr(fit.scores, structure, level, gross_map, convention, fit.hc1_factor)
    variance = fit.xtx_inv_kk * sigma * fit.xtx_inv_kk
    return SandwichEstimate(sigma, variance, float(np.sqrt(variance)), level)


def crse_statistic(
    fit: RegressionFit,
    structure: ClusterStructure,
    gross_map: IntArray | None = None,
    convention: Convention = "paper",
) -> float:
    """tau_CRSE: gross-level CRSE of the target coefficient under ``gross_map``"""
    return sandwich(fit, structure, "gross", convention, gross_map).se


class CrseStatistic:
    """CRSE as a gross-cluster-sensitive statistic for reclustering

    Scores are aggregated to fine clusters once; each regrouping only re-sums f-bar values.
    """

    name = "crse"

    def __init__(
        self, fit: RegressionFit, structure: ClusterStructure, convention: Convention = "paper"
    ) -> None:
        self.structure = structure
        self.fine_sums = aggregate_scores(fit.scores, structure, "fine")
        weight = _cluster_weight(structure.n_gross, structure.n, convention, fit.hc1_factor)
        self._scale = fit.xtx_inv_kk * np.sqrt(weight)

    def __call__(self, gross_map: IntArray) -> float:
        return float(self.evaluate_many(np.asarray(gross_map)[None, :])[0])

    def evaluate_many(self, gross_maps: IntArray) -> FloatArray:
        sums = gross_sums_many(self.fine_sums, gross_maps, self.structure.n_gross)
        return self._scale * np.sqrt(np.einsum("ij,ij->i", sums, sums))


@dataclass(frozen=True)
class CoefficientSummary:
    """Target estimate with fine- and gross-level CRSEs and t-based p-values"""

    name: str
    estimate: float
    se_fine: float
    se_gross: float
    p_fine: float
    p_gross: float
    n_fine: int
    n_gross: int


def coefficient_summary(
    fit: RegressionFit, structure: ClusterStructure, name: str = "x"
) -> CoefficientSummary:
    """Two-sided p-values from Student t with (clusters - 1) degrees of freedom

    Uses the textbook convention so the numbers compare with standard software.
    """
    estimate = fit.beta_k
    se_fine = sandwich(fit, structure, "fine", "textbook").se
    se_gross = sandwich(fit, structure, "gross", "textbook").se
    return CoefficientSummary(
        name=name,
        estimate=estimate,
        se_fine=se_fine,
        se_gross=se_gross,
        p_fine=_t_p_value(estimate, se_fine, structure.n_fine - 1),
        p_gross=_t_p_value(estimate, se_gross, structure.n_gross - 1),
        n_fine=structure.n_fine,
        n_gross=structure.n_gross,
    )


def _t_p_value(estimate: float, se: float, dof: int) -> float:
    if se == 0.0:
        return 0.0 if estimate != 0.0 else 1.0
    return float(2.0 * stats.t.sf(abs(estimate / se), dof))
