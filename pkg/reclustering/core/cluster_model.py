"""Two-level nested cluster structure

Units are nested in fine clusters, fine clusters in gross clusters. Internally every
level is coded by dense 0-based indices; the original labels are kept for reporting.
"""

import logging
import math
from collections import Counter
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .exceptions import ClusterStructureError, ErrorContext
from .resampling import Sidedness, sided_label

logger = logging.getLogger(__name__)

type IntArray = NDArray[np.int64]


@dataclass(frozen=True, eq=False)
class ClusterStructure:
    """Unit -> fine and fine -> gross assignment maps

    Build instances through the ``from_*`` constructors or ``validate``; the bare
    constructor performs no checks.
    """

    unit_to_fine: IntArray
    fine_to_gross: IntArray
    fine_labels: tuple[Hashable, ...] = field(default=())
    gross_labels: tuple[Hashable, ...] = field(default=())

    @property
    def n(self) -> int:
        return int(self.unit_to_fine.shape[0])

    @property
    def n_fine(self) -> int:
        """f-bar: number of fine clusters"""
        return int(self.fine_to_gross.shape[0])

    @property
    def n_gross(self) -> int:
        """g-bar: number of gross clusters"""
        if self.gross_labels:
            return len(self.gross_labels)
        return int(self.fine_to_gross.max()) + 1 if self.n_fine else 0

    @cached_property
    def fine_sizes(self) -> IntArray:
        """n_f: units per fine cluster"""
        return np.bincount(self.unit_to_fine, minlength=self.n_fine).astype(np.int64)

    @cached_property
    def gross_sizes(self) -> IntArray:
        """n_g: fine clusters per gross cluster"""
        return np.bincount(self.fine_to_gross, minlength=self.n_gross).astype(np.int64)

    @cached_property
    def unit_to_gross(self) -> IntArray:
        return self.fine_to_gross[self.unit_to_fine]

    @cached_property
    def position_in_fine(self) -> IntArray:
        """0-based position of each unit inside its fine cluster, in row order"""
        order = np.argsort(self.unit_to_fine, kind="stable")
        starts = np.concatenate(([0], np.cumsum(self.fine_sizes)[:-1]))
        positions = np.empty(self.n, dtype=np.int64)
        positions[order] = np.arange(self.n) - np.repeat(starts, self.fine_sizes)
        return positions

    def equals(self, other: "ClusterStructure") -> bool:
        return np.array_equal(self.unit_to_fine, other.unit_to_fine) and np.array_equal(
            self.fine_to_gross, other.fine_to_gross
        )

    def with_gross_map(self, fine_to_gross: IntArray) -> "ClusterStructure":
        """Same fine structure under another fine -> gross map"""
        return ClusterStructure(
            unit_to_fine=self.unit_to_fine,
            fine_to_gross=np.asarray(fine_to_gross, dtype=np.int64),
            fine_labels=self.fine_labels,
            gross_labels=self.gross_labels,
        )

    def fine_level(self) -> "ClusterStructure":
        """Structure whose gross clusters are the fine clusters themselves"""
        return ClusterStructure(
            unit_to_fine=self.unit_to_fine,
            fine_to_gross=np.arange(self.n_fine, dtype=np.int64),
            fine_labels=self.fine_labels,
            gross_labels=self.fine_labels,
        )

    def restrict_to_gross(self, gross: int) -> tuple[IntArray, "ClusterStructure"]:
        """Row indices of one gross cluster and the one-gross structure over them"""
        rows = np.flatnonzero(self.unit_to_gross == gross)
        fines = np.flatnonzero(self.fine_to_gross == gross)
        recode = np.full(self.n_fine, -1, dtype=np.int64)
        recode[fines] = np.arange(fines.shape[0])
        sub = ClusterStructure(
            unit_to_fine=recode[self.unit_to_fine[rows]],
            fine_to_gross=np.zeros(fines.shape[0], dtype=np.int64),
            fine_labels=tuple(self.fine_labels[f] for f in fines) if self.fine_labels else (),
            gross_labels=(self.gross_labels[gross],) if self.gross_labels else (),
        )
        return rows, sub

    @classmethod
    def from_labels(
        cls, unit_fine: Sequence[Hashable], unit_gross: Sequence[Hashable]
    ) -> "ClusterStructure":
        """Build from per-unit fine and gross labels (one row per unit)"""
        if len(unit_fine) != len(unit_gross):
            raise ClusterStructureError(
                f"Fine labels ({len(unit_fine)}) and gross labels ({len(unit_gross)}) "
                "differ in length"
            )

        fine_to_gross_label: dict[Hashable, Hashable] = {}
        for row, (fine, gross) in enumerate(zip(unit_fine, unit_gross, strict=True)):
            previous = fine_to_gross_label.setdefault(fine, gross)
            if previous != gross:
                raise ClusterStructureError(
                    f"Fine cluster {fine!r} is split across gross clusters "
                    f"{previous!r} and {gross!r} (row {row})",
                    context=ErrorContext(function_name="ClusterStructure.from_labels"),
                )

        return cls.from_maps(unit_fine, fine_to_gross_label)

    @classmethod
    def from_maps(
        cls,
        unit_to_fine: Sequence[Hashable],
        fine_to_gross: Mapping[Hashable, Hashable],
        gross_labels: Sequence[Hashable] | None = None,
    ) -> "ClusterStructure":
        """Build from a per-unit fine label and a declared fine -> gross mapping

        Every key of ``fine_to_gross`` declares a fine cluster; ``gross_labels``
        optionally declares gross clusters beyond those the mapping reaches.
        """
        fine_labels = tuple(_sorted_labels(fine_to_gross.keys()))
        declared_gross = list(gross_labels) if gross_labels is not None else []
        declared_gross.extend(g for g in fine_to_gross.values() if g not in declared_gross)
        gross_tuple = tuple(_sorted_labels(dict.fromkeys(declared_gross)))

        fine_index = {label: i for i, label in enumerate(fine_labels)}
        gross_index = {label: i for i, label in enumerate(gross_tuple)}

        unit_codes = np.empty(len(unit_to_fine), dtype=np.int64)
        for row, label in enumerate(unit_to_fine):
            code = fine_index.get(label)
            if code is None:
                raise ClusterStructureError(
                    f"Unit {row} assigned to unknown fine cluster {label!r} "
                    f"({len(fine_labels)} fine clusters declared)"
                )
            unit_codes[row] = code

        fine_codes = np.array([gross_index[fine_to_gross[f]] for f in fine_labels], dtype=np.int64)
        return validate(cls(unit_codes, fine_codes, fine_labels, gross_tuple))

    @classmethod
    def from_sizes(cls, fine_sizes_by_gross: Sequence[Sequence[int]]) -> "ClusterStructure":
        """Contiguous structure: gross g holds fine clusters with the listed unit counts"""
        fine_sizes = [size for group in fine_sizes_by_gross for size in group]
        fine_to_gross = np.repeat(
            np.arange(len(fine_sizes_by_gross)), [len(group) for group in fine_sizes_by_gross]
        )
        if any(size < 1 for size in fine_sizes):
            raise ClusterStructureError("empty cluster: every fine cluster needs at least one unit")
        unit_to_fine = np.repeat(np.arange(len(fine_sizes)), fine_sizes)
        return validate(
            cls(
                unit_to_fine.astype(np.int64),
                fine_to_gross.astype(np.int64),
                tuple(range(1, len(fine_sizes) + 1)),
                tuple(range(1, len(fine_sizes_by_gross) + 1)),
            )
        )

    @classmethod
    def one_level(cls, cluster_labels: Sequence[Hashable]) -> "ClusterStructure":
        """Simple case: every unit is its own fine cluster"""
        units = list(range(len(cluster_labels)))
        return cls.from_maps(units, dict(zip(units, cluster_labels, strict=True)))


def _sorted_labels(labels: Sequence[Hashable] | object) -> list[Hashable]:
    items = list(labels)  # type: ignore[call-overload]
    try:
        return sorted(items)
    except TypeError:
        return sorted(items, key=str)


def validate(structure: ClusterStructure) -> ClusterStructure:
    """Check the structure invariants and return a normalized copy

    Raises:
        ClusterStructureError: on an empty cluster, an unknown fine or gross cluster,
            or any label outside the dense index range
    """
    unit_to_fine = np.asarray(structure.unit_to_fine, dtype=np.int64)
    fine_to_gross = np.asarray(structure.fine_to_gross, dtype=np.int64)
    n_fine = fine_to_gross.shape[0]
    n_gross = len(structure.gross_labels) or (int(fine_to_gross.max()) + 1 if n_fine else 0)

    if unit_to_fine.ndim != 1 or fine_to_gross.ndim != 1:
        raise ClusterStructureError("Assignment maps must be one-dimensional")
    if unit_to_fine.shape[0] == 0 or n_fine == 0:
        raise ClusterStructureError("empty cluster: the structure holds no units")

    bad_units = np.flatnonzero((unit_to_fine < 0) | (unit_to_fine >= n_fine))
    if bad_units.size:
        raise ClusterStructureError(
            f"Unit {int(bad_units[0])} assigned to unknown fine cluster "
            f"{int(unit_to_fine[bad_units[0]])} (only {n_fine} fine clusters)"
        )
    bad_fines = np.flatnonzero((fine_to_gross < 0) | (fine_to_gross >= n_gross))
    if bad_fines.size:
        raise ClusterStructureError(
            f"Fine cluster {int(bad_fines[0])} assigned to unknown gross cluster "
            f"{int(fine_to_gross[bad_fines[0]])}"
        )

    fine_sizes = np.bincount(unit_to_fine, minlength=n_fine)
    if (fine_sizes == 0).any():
        empty = int(np.flatnonzero(fine_sizes == 0)[0])
        label = structure.fine_labels[empty] if structure.fine_labels else empty
        raise ClusterStructureError(f"empty cluster: fine cluster {label!r} has no units")
    gross_sizes = np.bincount(fine_to_gross, minlength=n_gross)
    if (gross_sizes == 0).any():
        empty = int(np.flatnonzero(gross_sizes == 0)[0])
        label = structure.gross_labels[empty] if structure.gross_labels else empty
        raise ClusterStructureError(f"empty cluster: gross cluster {label!r} has no fine clusters")

    fine_labels = structure.fine_labels or tuple(range(1, n_fine + 1))
    gross_labels = structure.gross_labels or tuple(range(1, n_gross + 1))
    if len(fine_labels) != n_fine:
        raise ClusterStructureError(
            f"{len(fine_labels)} fine labels for {n_fine} fine clusters"
        )

    return ClusterStructure(unit_to_fine, fine_to_gross, tuple(fine_labels), tuple(gross_labels))


def count_partitions(structure: ClusterStructure) -> int | Fraction:
    """r-bar*: f-bar! / (g-bar! * prod n_g!), evaluated exactly

    The formula is taken as printed. With unequal n_g it can be non-integral, in which
    case the exact Fraction is returned.
    """
    return partitions_from_sizes(structure.gross_sizes.tolist())


def partitions_from_sizes(gross_sizes: Sequence[int]) -> int | Fraction:
    n_fine = sum(gross_sizes)
    denominator = math.factorial(len(gross_sizes))
    for size in gross_sizes:
        denominator *= math.factorial(size)
    value = Fraction(math.factorial(n_fine), denominator)
    return value.numerator if value.denominator == 1 else value


def count_regroupings(structure: ClusterStructure) -> int:
    """Number of distinct unordered regroupings with the observed size multiset

    Gross clusters of equal size are interchangeable, those of different sizes are not:
    f-bar! / (prod n_g! * prod_s m_s!) with m_s the number of gross clusters of size s.
    Equals count_partitions when all n_g are equal.
    """
    sizes = structure.gross_sizes.tolist()
    denominator = 1
    for size in sizes:
        denominator *= math.factorial(size)
    for multiplicity in Counter(sizes).values():
        denominator *= math.factorial(multiplicity)
    return math.factorial(sum(sizes)) // denominator


@dataclass(frozen=True)
class Feasibility:
    """Whether the permutation test can reach level alpha"""

    feasible: bool
    partitions: int | Fraction
    required: float
    alpha: float
    sided: Sidedness

    @property
    def message(self) -> str:
        verdict = "feasible" if self.feasible else "infeasible"
        return (
            f"r*={self.partitions} distinct partitions, {self.required:g} needed "
            f"for a {sided_label(self.sided)} test at alpha={self.alpha:g}: {verdict}"
        )


def required_partitions(alpha: float, sided: Sidedness) -> float:
    return 2.0 / alpha if sided == "two" else 1.0 / alpha


def feasibility(structure: ClusterStructure, alpha: float, sided: Sidedness = "two") -> Feasibility:
    """Compare r-bar* with 2/alpha (two-sided) or 1/alpha (either one-sided tail)"""
    partitions = count_partitions(structure)
    required = required_partitions(alpha, sided)
    result = Feasibility(
        feasible=partitions >= required,
        partitions=partitions,
        required=required,
        alpha=alpha,
        sided=sided,
    )
    if not result.feasible:
        logger.warning(result.message)
    return result
