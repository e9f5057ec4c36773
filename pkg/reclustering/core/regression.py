"""Least squares with absorbed fine-cluster fixed effects and per-unit scores

Fixed effects are absorbed by within-fine-cluster demeaning (Frisch-Waugh-Lovell);
k_bar still counts the absorbed dummies so the HC1 factor matches the explicit-dummy fit.
"""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .cluster_model import ClusterStructure, IntArray
from .exceptions import ClusterStructureError, DataError, ErrorContext

logger = logging.getLogger(__name__)

type FloatArray = NDArray[np.float64]
type Level = Literal["fine", "gross"]

# Singular values below RANK_TOLERANCE * largest are treated as zero
RANK_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome, regressors and the cluster structure of one sample"""

    y: FloatArray
    X: FloatArray
    structure: ClusterStructure
    target: int = 0
    absorb_fine_fe: bool = True
    column_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64)
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

        if y.ndim != 1:
            raise DataError("Outcome must be a vector")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"Outcome has {y.shape[0]} rows but regressors have {X.shape[0]}")
        if y.shape[0] != self.structure.n:
            raise DataError(
                f"Data has {y.shape[0]} rows but the cluster structure has {self.structure.n} units"
            )
        if not 0 <= self.target < X.shape[1]:
            raise DataError(f"Target column {self.target} outside 0..{X.shape[1] - 1}")
        if not (np.isfinite(y).all() and np.isfinite(X).all()):
            raise DataError("Outcome and regressors must be finite (no missing values)")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def target_name(self) -> str:
        if self.column_names:
            return self.column_names[self.target]
        return f"x{self.target}"

    def with_outcome(self, y: FloatArray) -> "Dataset":
        return Dataset(
            y, self.X, self.structure, self.target, self.absorb_fine_fe, self.column_names
        )

    def restrict_to_gross(self, gross: int) -> "Dataset":
        """Rows of one gross cluster with their own fine structure"""
        rows, sub = self.structure.restrict_to_gross(gross)
        return Dataset(
            self.y[rows],
            self.X[rows],
            sub,
            self.target,
            self.absorb_fine_fe,
            self.column_names,
        )


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """Estimates, residuals and target-coefficient scores of one fit"""

    beta_hat: FloatArray
    residuals: FloatArray
    k_bar: int
    xtx_inv_kk: float
    partialled_target: FloatArray
    scores: FloatArray
    design_basis: FloatArray
    target: int

    @property
    def n(self) -> int:
        return int(self.residuals.shape[0])

    @property
    def beta_k(self) -> float:
        return float(self.beta_hat[self.target])

    @property
    def hc1_factor(self) -> float:
        return self.n / (self.n - self.k_bar)


def demean_within(values: FloatArray, groups: IntArray, n_groups: int) -> FloatArray:
    """Subtract group means from a vector or from each column of a matrix"""
    sizes = np.bincount(groups, minlength=n_groups).astype(np.float64)
    if values.ndim == 1:
        means = np.bincount(groups, weights=values, minlength=n_groups) / sizes
        return values - means[groups]
    out = np.empty_like(values)
    for j in range(values.shape[1]):
        means = np.bincount(groups, weights=values[:, j], minlength=n_groups) / sizes
        out[:, j] = values[:, j] - means[groups]
    return out


def ols_fit(data: Dataset, absorb_fine_fe: bool | None = None) -> RegressionFit:
    """Least squares of y on X, optionally absorbing fine-cluster fixed effects

    Raises:
        DataError: rank-deficient regressors, a target collinear with the other
            regressors or the fixed effects, or n <= k_bar
    """
    absorb = data.absorb_fine_fe if absorb_fine_fe is None else absorb_fine_fe
    structure = data.structure
    y, X = data.y, data.X

    if absorb:
        y = demean_within(y, structure.unit_to_fine, structure.n_fine)
        X = demean_within(X, structure.unit_to_fine, structure.n_fine)

    U, singular, Vt = scipy.linalg.svd(X, full_matrices=False)
    if singular.size == 0 or singular[0] == 0.0:
        raise DataError(
            "Regressors have no variation"
            + (" within fine clusters" if absorb else ""),
            context=ErrorContext(function_name="ols_fit"),
        )
    rank = int((singular > RANK_TOLERANCE * singular[0]).sum())
    if rank < X.shape[1]:
        raise DataError(
            f"Regressor matrix is rank deficient (rank {rank} < {X.shape[1]})",
            context=ErrorContext(function_name="ols_fit"),
            suggestions=[
                "Drop collinear controls",
                "Check for controls constant within fine clusters",
            ],
        )

    beta_hat = Vt.T @ ((U.T @ y) / singular)
    residuals = y - X @ beta_hat

    partialled = _partial_out(X, data.target)
    norm = float(partialled @ partialled)
    if norm <= RANK_TOLERANCE * float(X[:, data.target] @ X[:, data.target]) or norm == 0.0:
        raise DataError(
            f"Target regressor {data.target_name} is collinear with the other regressors"
            + (" and the fine-cluster fixed effects" if absorb else ""),
            context=ErrorContext(function_name="ols_fit"),
        )

    k_bar = X.shape[1] + (structure.n_fine if absorb else 0)
    scores = hc1_scores(partialled, residuals, k_bar)
    logger.debug(
        f"OLS fit: n={data.n}, k_bar={k_bar}, beta_k={beta_hat[data.target]:.6g}, "
        f"absorbed={absorb}"
    )
    return RegressionFit(
        beta_hat=beta_hat,
        residuals=residuals,
        k_bar=k_bar,
        xtx_inv_kk=1.0 / norm,
        partialled_target=partialled,
        scores=scores,
        design_basis=U,
        target=data.target,
    )


def _partial_out(X: FloatArray, target: int) -> FloatArray:
    """Residual of the target column on the remaining columns"""
    column = X[:, target]
    others = np.delete(X, target, axis=1)
    if others.shape[1] == 0:
        return column.copy()
    coef, *_ = scipy.linalg.lstsq(others, column, cond=RANK_TOLERANCE)
    return column - others @ coef


def hc1_scores(partialled_target: FloatArray, residuals: FloatArray, k_bar: int) -> FloatArray:
    """s_i = n / (n - k_bar) * x~_i * u_i"""
    n = residuals.shape[0]
    if n <= k_bar:
        raise DataError(
            f"HC1 factor undefined: n={n} is not larger than k_bar={k_bar}",
            suggestions=["Use more units per fine cluster or fewer regressors"],
        )
    return (n / (n - k_bar)) * partialled_target * residuals


def compute_scores(fit: RegressionFit, data: Dataset) -> FloatArray:
    """HC1-scaled scores of the target coefficient"""
    if fit.n != data.n:
        raise DataError(f"Fit has {fit.n} residuals but data has {data.n} rows")
    return hc1_scores(fit.partialled_target, fit.residuals, fit.k_bar)


def aggregate_scores(
    scores: FloatArray,
    structure: ClusterStructure,
    level: Level = "gross",
    gross_map: IntArray | None = None,
) -> FloatArray:
    """Per-cluster score sums at fine level or under a (possibly permuted) gross map"""
    fine_sums = np.bincount(structure.unit_to_fine, weights=scores, minlength=structure.n_fine)
    if level == "fine":
        return fine_sums

    if gross_map is None:
        gross_map = structure.fine_to_gross
    else:
        gross_map = np.asarray(gross_map, dtype=np.int64)
        check_regrouping(structure, gross_map)
    return np.bincount(gross_map, weights=fine_sums, minlength=structure.n_gross)


def check_regrouping(structure: ClusterStructure, gross_map: IntArray) -> None:
    """A regrouping must keep n_g fine clusters in every gross cluster"""
    if gross_map.shape != (structure.n_fine,):
        raise ClusterStructureError(
            f"Gross map has {gross_map.shape[0]} entries for {structure.n_fine} fine clusters"
        )
    if gross_map.min() < 0 or gross_map.max() >= structure.n_gross:
        raise ClusterStructureError("Gross map refers to an unknown gross cluster")
    counts = np.bincount(gross_map, minlength=structure.n_gross)
    if not np.array_equal(counts, structure.gross_sizes):
        raise ClusterStructureError(
            "Gross map is not a regrouping of the observed composition "
            f"(counts {counts.tolist()} vs n_g {structure.gross_sizes.tolist()})"
        )


def gross_sums_many(fine_sums: FloatArray, gross_maps: IntArray, n_gross: int) -> FloatArray:
    """Gross-cluster sums for a stack of gross maps, one row per map"""
    draws, n_fine = gross_maps.shape
    offsets = gross_maps + n_gross * np.arange(draws)[:, None]
    weights = np.broadcast_to(fine_sums, (draws, n_fine))
    sums = np.bincount(offsets.ravel(), weights=weights.ravel(), minlength=draws * n_gross)
    return sums.reshape(draws, n_gross)
