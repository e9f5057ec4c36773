"""Tests for the reclustering permutation test"""

import numpy as np
import pytest

from reclustering.core.alt_tests import SvStatistic
from reclustering.core.cluster_model import ClusterStructure
from reclustering.core.exceptions import (
    ClusterStructureError,
    EnumerationLimitError,
    InfeasibleStructureError,
)
from reclustering.core.recluster import (
    check_feasible,
    draw_gross_maps,
    draw_recluster,
    enumerate_regroupings,
    exhaustive_test,
    permutation_test,
    recluster_test,
    regroup,
)
from reclustering.core.regression import ols_fit
from reclustering.core.variance import CrseStatistic

from .conftest import make_dataset


class LookupStatistic:
    """``high`` on the observed gross map, ``low`` on every other map"""

    name = "lookup"

    def __init__(self, observed, high: float, low: float):
        self.observed = np.asarray(observed)
        self.high = high
        self.low = low

    def __call__(self, gross_map):
        return float(self.evaluate_many(np.asarray(gross_map)[None, :])[0])

    def evaluate_many(self, gross_maps):
        same = (gross_maps == self.observed).all(axis=1)
        return np.where(same, self.high, self.low)


class ConstantStatistic:
    name = "constant"

    def __call__(self, gross_map):
        return 2.5

    def evaluate_many(self, gross_maps):
        return np.full(gross_maps.shape[0], 2.5)


class ExpStatistic:
    """Strictly increasing transform of another statistic"""

    def __init__(self, inner):
        self.inner = inner
        self.name = f"exp-{inner.name}"

    def __call__(self, gross_map):
        return float(np.exp(self.inner(gross_map)))

    def evaluate_many(self, gross_maps):
        return np.exp(self.inner.evaluate_many(gross_maps))


def partition_of(gross_map) -> frozenset:
    groups: dict[int, set[int]] = {}
    for fine, gross in enumerate(gross_map):
        groups.setdefault(int(gross), set()).add(fine)
    return frozenset(frozenset(members) for members in groups.values())


class TestRegrouping:
    def test_identity_permutation_keeps_observed_map(self, three_by_two):
        recluster = regroup(three_by_two, np.arange(three_by_two.n_fine))
        np.testing.assert_array_equal(recluster.gross_map, three_by_two.fine_to_gross)

    def test_non_permutation_is_rejected(self, three_by_two):
        with pytest.raises(ClusterStructureError, match="Not a permutation"):
            regroup(three_by_two, np.array([0, 0, 1, 2, 3, 4]))

    def test_draws_preserve_gross_sizes(self, medium_structure):
        rng = np.random.default_rng(0)
        for _ in range(20):
            recluster = draw_recluster(medium_structure, rng)
            np.testing.assert_array_equal(
                np.bincount(recluster.gross_map), medium_structure.gross_sizes
            )
        maps = draw_gross_maps(medium_structure, rng, 50)
        for row in maps:
            np.testing.assert_array_equal(np.bincount(row), medium_structure.gross_sizes)

    def test_three_partitions_are_equally_likely(self, two_by_two):
        maps = draw_gross_maps(two_by_two, np.random.default_rng(2024), 30_000)
        # partner of fine cluster 0 identifies the partition
        partner = np.argmax(maps[:, 1:] == maps[:, :1], axis=1)
        frequencies = np.bincount(partner, minlength=3) / maps.shape[0]
        np.testing.assert_allclose(frequencies, 1 / 3, atol=0.01)

    def test_single_gross_cluster_cannot_be_regrouped(self):
        structure = ClusterStructure.from_sizes([[1, 1, 1]])
        with pytest.raises(ClusterStructureError, match="at least two gross clusters"):
            draw_recluster(structure, np.random.default_rng(0))


class TestEnumeration:
    def test_two_by_two_gives_three(self, two_by_two):
        maps = list(enumerate_regroupings(two_by_two))
        assert len(maps) == 3
        assert len({partition_of(m) for m in maps}) == 3

    def test_three_by_two_gives_fifteen_distinct(self, three_by_two):
        maps = list(enumerate_regroupings(three_by_two))
        assert len(maps) == 15
        assert len({partition_of(m) for m in maps}) == 15
        for gross_map in maps:
            np.testing.assert_array_equal(np.bincount(gross_map), [2, 2, 2])

    def test_unequal_sizes_keep_the_composition(self):
        structure = ClusterStructure.from_sizes([[1], [1, 1], [1, 1]])
        maps = list(enumerate_regroupings(structure))
        # 5! / (1! 2! 2! * 1! 2!) = 15
        assert len(maps) == 15
        assert len({partition_of(m) for m in maps}) == 15
        for gross_map in maps:
            np.testing.assert_array_equal(np.bincount(gross_map), structure.gross_sizes)


class TestPermutationTest:
    def test_observed_above_all_draws(self, medium_structure):
        statistic = LookupStatistic(medium_structure.fine_to_gross, high=10.0, low=1.0)
        result = permutation_test(statistic, medium_structure, reps=200, seed=1)
        assert result.p_value == 0.0
        assert result.decision is True
        assert result.mode == "monte-carlo"
        assert result.method == "recluster-lookup"

    def test_observed_below_all_draws(self, medium_structure):
        statistic = LookupStatistic(medium_structure.fine_to_gross, high=0.0, low=1.0)
        result = permutation_test(statistic, medium_structure, reps=200, seed=1)
        assert result.p_value == 1.0
        assert result.decision is True
        assert permutation_test(
            statistic, medium_structure, reps=200, seed=1, sided="one"
        ).decision is False
        assert permutation_test(
            statistic, medium_structure, reps=200, seed=1, sided="lower"
        ).decision is True

    def test_constant_statistic_is_degenerate(self, medium_structure):
        result = permutation_test(ConstantStatistic(), medium_structure, reps=100, seed=0)
        assert result.degenerate
        assert result.decision is None
        assert result.p_value == 0.0

    def test_seed_determinism(self, medium_dataset):
        statistic = CrseStatistic(ols_fit(medium_dataset), medium_dataset.structure)
        first = permutation_test(statistic, medium_dataset.structure, reps=500, seed=42)
        second = permutation_test(statistic, medium_dataset.structure, reps=500, seed=42)
        np.testing.assert_array_equal(first.draws, second.draws)
        assert first.p_value == second.p_value

    def test_worker_count_does_not_change_draws(self, medium_dataset):
        statistic = CrseStatistic(ols_fit(medium_dataset), medium_dataset.structure)
        serial = permutation_test(statistic, medium_dataset.structure, reps=1100, seed=9)
        threaded = permutation_test(
            statistic, medium_dataset.structure, reps=1100, seed=9, workers=4
        )
        np.testing.assert_array_equal(serial.draws, threaded.draws)

    def test_p_value_recomputes_from_draws(self, medium_dataset):
        statistic = CrseStatistic(ols_fit(medium_dataset), medium_dataset.structure)
        result = permutation_test(statistic, medium_dataset.structure, reps=300, seed=5)
        assert result.recompute_p() == result.p_value
        assert result.p_value == np.count_nonzero(result.draws > result.statistic) / 300
        assert result.n_draws == 300

    def test_count_observed_variant(self, medium_dataset):
        statistic = CrseStatistic(ols_fit(medium_dataset), medium_dataset.structure)
        result = permutation_test(
            statistic, medium_dataset.structure, reps=300, seed=5, count_observed=True
        )
        expected = (1 + np.count_nonzero(result.draws >= result.statistic)) / 301
        assert result.p_value == pytest.approx(expected)

    def test_monotone_transform_leaves_p_unchanged(self, medium_dataset):
        statistic = CrseStatistic(ols_fit(medium_dataset), medium_dataset.structure)
        plain = permutation_test(statistic, medium_dataset.structure, reps=400, seed=3)
        transformed = permutation_test(
            ExpStatistic(statistic), medium_dataset.structure, reps=400, seed=3
        )
        assert plain.p_value == transformed.p_value

    def test_cv1_convention_does_not_change_p(self, medium_dataset):
        fit = ols_fit(medium_dataset)
        structure = medium_dataset.structure
        paper = permutation_test(CrseStatistic(fit, structure, "paper"), structure, 400, 8)
        textbook = permutation_test(CrseStatistic(fit, structure, "textbook"), structure, 400, 8)
        assert paper.p_value == textbook.p_value

    def test_scale_invariance_of_p(self, medium_dataset):
        structure = medium_dataset.structure
        base = CrseStatistic(ols_fit(medium_dataset), structure)
        scaled = CrseStatistic(ols_fit(medium_dataset.with_outcome(7.0 * medium_dataset.y)), structure)
        assert (
            permutation_test(base, structure, 400, 4).p_value
            == permutation_test(scaled, structure, 400, 4).p_value
        )

    def test_sv_statistic_runs_through_the_engine(self, medium_dataset):
        statistic = SvStatistic(ols_fit(medium_dataset), medium_dataset.structure)
        result = permutation_test(statistic, medium_dataset.structure, reps=200, seed=2)
        assert result.method == "recluster-sv"
        assert 0.0 <= result.p_value <= 1.0


class TestExhaustiveTest:
    def test_two_by_two_evaluates_three_regroupings(self, two_by_two):
        data = make_dataset(two_by_two, seed=1)
        statistic = CrseStatistic(ols_fit(data), two_by_two)
        result = exhaustive_test(statistic, two_by_two)
        assert result.n_draws == 3
        assert result.mode == "exhaustive"

    def test_constant_statistic_is_degenerate(self, three_by_two):
        result = exhaustive_test(ConstantStatistic(), three_by_two)
        assert result.p_value == 0.0
        assert result.degenerate
        assert result.decision is None

    def test_cap_is_enforced(self, medium_structure):
        with pytest.raises(EnumerationLimitError):
            exhaustive_test(ConstantStatistic(), medium_structure, cap=1000)

    @pytest.mark.parametrize("seed", range(20))
    def test_monte_carlo_agrees_with_enumeration(self, three_by_two, seed):
        data = make_dataset(three_by_two, seed=100 + seed)
        statistic = CrseStatistic(ols_fit(data), three_by_two)
        exact = exhaustive_test(statistic, three_by_two)
        sampled = permutation_test(statistic, three_by_two, reps=10_000, seed=seed)
        assert abs(sampled.p_value - exact.p_value) <= 0.02


class TestReclusterTest:
    def test_auto_enumerates_small_structures(self, three_by_two):
        data = make_dataset(three_by_two, seed=3)
        statistic = CrseStatistic(ols_fit(data), three_by_two)
        result = recluster_test(statistic, three_by_two, reps=1000, seed=7)
        assert result.mode == "exhaustive"
        assert result.seed == 7

    def test_auto_samples_large_structures(self, medium_dataset):
        statistic = CrseStatistic(ols_fit(medium_dataset), medium_dataset.structure)
        result = recluster_test(statistic, medium_dataset.structure, reps=250, seed=7)
        assert result.mode == "monte-carlo"
        assert result.n_draws == 250

    def test_forced_monte_carlo_on_small_structure(self, three_by_two):
        data = make_dataset(three_by_two, seed=3)
        statistic = CrseStatistic(ols_fit(data), three_by_two)
        result = recluster_test(statistic, three_by_two, reps=100, seed=7, mode="monte-carlo")
        assert result.mode == "monte-carlo"


    def test_simple_case_without_fixed_effects(self):
        structure = ClusterStructure.one_level([g for g in range(6) for _ in range(10)])
        data = make_dataset(structure, seed=4, absorb_fine_fe=False)
        statistic = CrseStatistic(ols_fit(data), structure)
        result = recluster_test(statistic, structure, reps=199, seed=3)
        assert result.mode == "monte-carlo"
        assert result.n_draws == 199
        assert 0.0 <= result.p_value <= 1.0
        assert not result.degenerate
        assert result.decision is not None


class TestCheckFeasible:
    def test_infeasible_raises(self, two_by_two):
        with pytest.raises(InfeasibleStructureError) as excinfo:
            check_feasible(two_by_two, 0.05, "two")
        assert excinfo.value.exit_code == 3
        assert excinfo.value.partitions == 3

    def test_force_only_warns(self, two_by_two, caplog):
        check_feasible(two_by_two, 0.05, "two", force=True)
        assert "forced" in caplog.text

    def test_feasible_passes(self, medium_structure):
        check_feasible(medium_structure, 0.05, "two")
