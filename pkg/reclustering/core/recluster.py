"""Reclustering permutation test

Fine clusters are randomly regrouped into gross clusters of the observed sizes and a
gross-cluster-sensitive statistic is re-evaluated on the fixed fit. The p-value is the
share of regroupings whose statistic strictly exceeds the observed one.
"""

import itertools
import logging
from collections.abc import Iterator
from dataclasses import dataclass
from typing import Literal, Protocol

import numpy as np

from .cluster_model import ClusterStructure, IntArray, count_regroupings, feasibility
from .exceptions import ClusterStructureError, EnumerationLimitError, InfeasibleStructureError
from .regression import FloatArray
from .resampling import SeedLike, Sidedness, run_blocks
from .results import TestResult

logger = logging.getLogger(__name__)

type ReclusterMode = Literal["auto", "monte-carlo", "exhaustive"]

DEFAULT_REPS = 1000
DEFAULT_EXHAUSTIVE_CAP = 10_000
ENUMERATION_CHUNK = 4096


class ReclusterStatistic(Protocol):
    """Statistic of the fitted model that depends on data only through a gross map

    It must be exchangeable in fine clusters and sensitive to how they are grouped.
    """

    name: str

    def __call__(self, gross_map: IntArray) -> float: ...

    def evaluate_many(self, gross_maps: IntArray) -> FloatArray: ...


@dataclass(frozen=True)
class Recluster:
    """One regrouping: fine cluster f takes the gross cluster of fine cluster permutation[f]"""

    permutation: IntArray
    gross_map: IntArray


def _require_two_gross(structure: ClusterStructure) -> None:
    if structure.n_gross < 2:
        raise ClusterStructureError(
            f"Reclustering needs at least two gross clusters, got {structure.n_gross}"
        )


def regroup(structure: ClusterStructure, permutation: IntArray) -> Recluster:
    permutation = np.asarray(permutation, dtype=np.int64)
    if not np.array_equal(np.sort(permutation), np.arange(structure.n_fine)):
        raise ClusterStructureError(
            f"Not a permutation of the {structure.n_fine} fine clusters"
        )
    return Recluster(permutation, structure.fine_to_gross[permutation])


def draw_recluster(structure: ClusterStructure, rng: np.random.Generator) -> Recluster:
    """Uniformly random regrouping preserving every gross cluster's size"""
    _require_two_gross(structure)
    return regroup(structure, rng.permutation(structure.n_fine))


def draw_gross_maps(
    structure: ClusterStructure, rng: np.random.Generator, size: int
) -> IntArray:
    """``size`` independent regroupings stacked as rows"""
    permutations = rng.permuted(np.tile(np.arange(structure.n_fine), (size, 1)), axis=1)
    return structure.fine_to_gross[permutations]


def check_feasible(
    structure: ClusterStructure, alpha: float, sided: Sidedness = "two", force: bool = False
) -> None:
    """Raise InfeasibleStructureError unless forced; forced runs only warn"""
    result = feasibility(structure, alpha, sided)
    if result.feasible:
        return
    if force:
        logger.warning("Running an infeasible test because it was forced")
        return
    raise InfeasibleStructureError(result.partitions, result.required)


def permutation_test(
    statistic: ReclusterStatistic,
    structure: ClusterStructure,
    reps: int = DEFAULT_REPS,
    seed: SeedLike = 0,
    alpha: float = 0.05,
    sided: Sidedness = "two",
    *,
    keys: tuple[int, ...] = (),
    count_observed: bool = False,
    workers: int = 1,
) -> TestResult:
    """Monte Carlo reclustering test over ``reps`` iid uniform regroupings

    Draws are not deduplicated and the observed grouping is not added to the reference
    set unless ``count_observed`` is set.
    """
    _require_two_gross(structure)
    if reps < 1:
        raise ValueError(f"reps must be at least 1, got {reps}")

    observed = statistic(structure.fine_to_gross)

    def draw_block(rng: np.random.Generator, size: int) -> FloatArray:
        return statistic.evaluate_many(draw_gross_maps(structure, rng, size))

    draws = run_blocks(reps, seed, draw_block, keys=keys, workers=workers)
    result = TestResult.from_draws(
        method=f"recluster-{statistic.name}",
        mode="monte-carlo",
        statistic=observed,
        draws=draws,
        alpha=alpha,
        sided=sided,
        seed=seed if isinstance(seed, int) else None,
        count_observed=count_observed,
    )
    logger.debug(f"Permutation test: tau_obs={observed:.6g}, p={result.p_value:.4f}, r={reps}")
    return result


def enumerate_regroupings(structure: ClusterStructure) -> Iterator[IntArray]:
    """Every distinct unordered regrouping with the observed size multiset, once

    Gross clusters of equal size are interchangeable. The block holding the smallest
    unassigned fine cluster is built first, which makes every partition canonical.
    """
    labels_by_size: dict[int, list[int]] = {}
    for gross, size in enumerate(structure.gross_sizes.tolist()):
        labels_by_size.setdefault(size, []).append(gross)
    taken = dict.fromkeys(labels_by_size, 0)
    gross_map = np.full(structure.n_fine, -1, dtype=np.int64)

    def assign(unassigned: tuple[int, ...]) -> Iterator[IntArray]:
        if not unassigned:
            yield gross_map.copy()
            return
        first, rest = unassigned[0], unassigned[1:]
        for size, labels in labels_by_size.items():
            if taken[size] == len(labels):
                continue
            label = labels[taken[size]]
            taken[size] += 1
            for partners in itertools.combinations(rest, size - 1):
                gross_map[[first, *partners]] = label
                chosen = set(partners)
                yield from assign(tuple(f for f in rest if f not in chosen))
            taken[size] -= 1

    yield from assign(tuple(range(structure.n_fine)))


def exhaustive_test(
    statistic: ReclusterStatistic,
    structure: ClusterStructure,
    alpha: float = 0.05,
    sided: Sidedness = "two",
    *,
    cap: int = DEFAULT_EXHAUSTIVE_CAP,
    count_observed: bool = False,
) -> TestResult:
    """Exact test: the statistic over every distinct regrouping

    Raises:
        EnumerationLimitError: more distinct regroupings than ``cap``
    """
    _require_two_gross(structure)
    total = count_regroupings(structure)
    if total > cap:
        raise EnumerationLimitError(total, cap)

    observed = statistic(structure.fine_to_gross)
    chunks: list[FloatArray] = []
    regroupings = enumerate_regroupings(structure)
    while batch := list(itertools.islice(regroupings, ENUMERATION_CHUNK)):
        chunks.append(statistic.evaluate_many(np.stack(batch)))
    draws = np.concatenate(chunks)

    logger.debug(f"Exhaustive test over {draws.shape[0]} regroupings")
    return TestResult.from_draws(
        method=f"recluster-{statistic.name}",
        mode="exhaustive",
        statistic=observed,
        draws=draws,
        alpha=alpha,
        sided=sided,
        count_observed=count_observed,
    )


def recluster_test(
    statistic: ReclusterStatistic,
    structure: ClusterStructure,
    reps: int = DEFAULT_REPS,
    seed: SeedLike = 0,
    alpha: float = 0.05,
    sided: Sidedness = "two",
    *,
    mode: ReclusterMode = "auto",
    keys: tuple[int, ...] = (),
    cap: int = DEFAULT_EXHAUSTIVE_CAP,
    count_observed: bool = False,
    workers: int = 1,
) -> TestResult:
    """Reclustering test; ``auto`` enumerates when there are no more regroupings than reps"""
    if mode == "auto":
        total = count_regroupings(structure)
        mode = "exhaustive" if total <= min(reps, cap) else "monte-carlo"
        logger.debug(f"{total} distinct regroupings, using {mode} mode")

    if mode == "exhaustive":
        result = exhaustive_test(
            statistic, structure, alpha, sided, cap=cap, count_observed=count_observed
        )
        result.seed = seed if isinstance(seed, int) else None
        return result
    return permutation_test(
        statistic,
        structure,
        reps,
        seed,
        alpha,
        sided,
        keys=keys,
        count_observed=count_observed,
        workers=workers,
    )
