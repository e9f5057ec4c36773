"""Tests for sandwich variances and the CRSE statistic"""

import numpy as np
import pytest
from scipy import stats

from reclustering.core.cluster_model import ClusterStructure
from reclustering.core.exceptions import DataError
from reclustering.core.regression import Dataset, ols_fit
from reclustering.core.variance import (
    CrseStatistic,
    coefficient_summary,
    crse_statistic,
    cv1_factor,
    sandwich,
    sigma_cr,
    sigma_naive,
)

from .conftest import make_dataset


def dense_crse(data: Dataset, gross_map: np.ndarray, convention: str) -> float:
    """(X'X)^-1 X' Omega X (X'X)^-1 with explicit regressors, target entry"""
    X, y = data.X, data.y
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    residuals = y - X @ (bread @ (X.T @ y))
    groups = gross_map[data.structure.unit_to_fine]
    n_groups = int(groups.max()) + 1
    meat = np.zeros((k, k))
    for g in range(n_groups):
        rows = groups == g
        v = X[rows].T @ residuals[rows]
        meat += np.outer(v, v)
    v_kk = (bread @ meat @ bread)[0, 0]
    h = n / (n - k)
    c = n_groups * (n - 1) / ((n_groups - 1) * n)
    factor = (h * c) ** 2 if convention == "paper" else h * c
    return float(np.sqrt(factor * v_kk))


def with_dummies(data: Dataset) -> Dataset:
    structure = data.structure
    dummies = np.eye(structure.n_fine)[structure.unit_to_fine]
    return Dataset(
        data.y, np.column_stack([data.X, dummies]), structure, absorb_fine_fe=False
    )


class TestSigma:
    def test_sigma_naive(self):
        assert sigma_naive(np.zeros(3)) == 0.0
        assert sigma_naive(np.array([-1.0, 1.0])) == pytest.approx(2.0)

    def test_sigma_cr_two_clusters(self):
        structure = ClusterStructure.from_sizes([[2], [2]])
        scores = np.array([1.0, 2.0, 3.0, 4.0])
        assert cv1_factor(2, 4) == pytest.approx(1.5)
        assert sigma_cr(scores, structure, "gross") == pytest.approx(130.5)
        assert sigma_cr(scores, structure, "fine") == pytest.approx(130.5)

    def test_singleton_clusters_reduce_to_naive(self):
        scores = np.random.default_rng(1).standard_normal(6)
        structure = ClusterStructure.one_level(list(range(6)))
        assert sigma_cr(scores, structure, "gross") == pytest.approx(sigma_naive(scores))

    def test_zero_cluster_sums(self):
        structure = ClusterStructure.from_sizes([[2], [2]])
        assert sigma_cr(np.array([1.0, -1.0, 2.0, -2.0]), structure) == 0.0

    def test_single_cluster_is_an_error(self):
        structure = ClusterStructure.from_sizes([[2, 2]])
        with pytest.raises(DataError, match="CV1 factor undefined"):
            sigma_cr(np.ones(4), structure, "gross")


class TestCrseStatistic:
    @pytest.mark.parametrize("seed", range(50))
    @pytest.mark.parametrize("convention", ["paper", "textbook"])
    def test_matches_dense_sandwich(self, seed, convention):
        rng = np.random.default_rng(seed)
        sizes = [[int(s) for s in rng.integers(2, 4, size=3)] for _ in range(3)]
        structure = ClusterStructure.from_sizes(sizes)
        data = with_dummies(make_dataset(structure, seed=seed, n_controls=1))
        fit = ols_fit(data)

        expected = dense_crse(data, structure.fine_to_gross, convention)
        actual = crse_statistic(fit, structure, convention=convention)
        assert actual == pytest.approx(expected, rel=1e-8)

    def test_absorbed_matches_dense_sandwich(self, three_by_two):
        data = make_dataset(three_by_two, seed=4)
        explicit = with_dummies(data)
        absorbed = crse_statistic(ols_fit(data), three_by_two)
        assert absorbed == pytest.approx(
            dense_crse(explicit, three_by_two.fine_to_gross, "paper"), rel=1e-8
        )

    def test_zero_residuals(self):
        structure = ClusterStructure.from_sizes([[2], [2], [2]])
        x = np.array([1.0, 2.0, 0.5, 3.0, -1.0, 2.5])
        fit = ols_fit(Dataset(3.0 * x, x, structure, absorb_fine_fe=False))
        assert crse_statistic(fit, structure) == pytest.approx(0.0, abs=1e-10)

    def test_one_fine_per_gross_equals_fine_level(self):
        structure = ClusterStructure.from_sizes([[3], [3], [3], [3]])
        data = make_dataset(structure, seed=2, absorb_fine_fe=False)
        fit = ols_fit(data)
        assert sandwich(fit, structure, "gross").se == pytest.approx(
            sandwich(fit, structure, "fine").se
        )

    def test_scale_equivariance(self, medium_dataset):
        fit = ols_fit(medium_dataset)
        scaled = ols_fit(medium_dataset.with_outcome(3.0 * medium_dataset.y))
        structure = medium_dataset.structure
        assert crse_statistic(scaled, structure) == pytest.approx(
            3.0 * crse_statistic(fit, structure)
        )

    def test_gross_cluster_sensitivity(self, medium_dataset):
        fit = ols_fit(medium_dataset)
        statistic = CrseStatistic(fit, medium_dataset.structure)
        other = np.roll(medium_dataset.structure.fine_to_gross, 1)
        assert statistic(medium_dataset.structure.fine_to_gross) != pytest.approx(
            statistic(other)
        )

    def test_fine_cluster_exchangeability(self, three_by_two):
        data = make_dataset(three_by_two, seed=8)
        tau = crse_statistic(ols_fit(data), three_by_two)

        rng = np.random.default_rng(0)
        rows = rng.permutation(three_by_two.n)
        relabel = rng.permutation(three_by_two.n_fine)
        fine = relabel[three_by_two.unit_to_fine[rows]]
        gross = three_by_two.unit_to_gross[rows]
        shuffled = ClusterStructure.from_labels(fine.tolist(), gross.tolist())
        moved = Dataset(data.y[rows], data.X[rows], shuffled)
        assert crse_statistic(ols_fit(moved), shuffled) == pytest.approx(tau, rel=1e-10)

    def test_evaluate_many_matches_single_evaluations(self, medium_dataset):
        fit = ols_fit(medium_dataset)
        structure = medium_dataset.structure
        statistic = CrseStatistic(fit, structure)
        rng = np.random.default_rng(3)
        maps = np.stack([rng.permutation(structure.fine_to_gross) for _ in range(5)])
        expected = [crse_statistic(fit, structure, gross_map) for gross_map in maps]
        np.testing.assert_allclose(statistic.evaluate_many(maps), expected, rtol=1e-12)


class TestCoefficientSummary:
    def test_t_based_p_values(self, medium_dataset):
        fit = ols_fit(medium_dataset)
        structure = medium_dataset.structure
        summary = coefficient_summary(fit, structure, "x")

        se_gross = sandwich(fit, structure, "gross", "textbook").se
        assert summary.se_gross == pytest.approx(se_gross)
        expected = 2.0 * stats.t.sf(abs(fit.beta_k / se_gross), structure.n_gross - 1)
        assert summary.p_gross == pytest.approx(expected)
        assert (summary.n_fine, summary.n_gross) == (24, 6)
        assert 0.0 <= summary.p_fine <= 1.0
