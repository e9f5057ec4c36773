"""Shared fixtures for reclustering tests"""

import logging

import numpy as np
import pytest

from reclustering.core.cluster_model import ClusterStructure
from reclustering.core.regression import Dataset


def make_dataset(
    structure: ClusterStructure,
    seed: int = 0,
    beta: float = 1.0,
    n_controls: int = 0,
    absorb_fine_fe: bool = True,
    gross_shock: float = 0.0,
) -> Dataset:
    """Random regression data on ``structure``: y = beta x + fixed effect + noise"""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(structure.n)
    controls = rng.standard_normal((structure.n, n_controls))
    fixed_effects = rng.standard_normal(structure.n_fine)[structure.unit_to_fine]
    shocks = gross_shock * rng.standard_normal(structure.n_gross)[structure.unit_to_gross]
    y = beta * x + controls.sum(axis=1) + fixed_effects + shocks + rng.standard_normal(structure.n)
    columns = [x, *controls.T]
    names = ["x", *(f"c{j}" for j in range(n_controls))]
    if not absorb_fine_fe:
        columns.append(np.ones(structure.n))
        names.append("intercept")
    return Dataset(
        y=y,
        X=np.column_stack(columns),
        structure=structure,
        absorb_fine_fe=absorb_fine_fe,
        column_names=tuple(names),
    )


@pytest.fixture
def three_by_two() -> ClusterStructure:
    """g = 3 gross clusters of 2 fine clusters with 3 units each: 15 regroupings"""
    return ClusterStructure.from_sizes([[3, 3], [3, 3], [3, 3]])


@pytest.fixture
def two_by_two() -> ClusterStructure:
    """g = 2 gross clusters of 2 fine clusters with 2 units each: 3 regroupings"""
    return ClusterStructure.from_sizes([[2, 2], [2, 2]])


@pytest.fixture
def medium_structure() -> ClusterStructure:
    """g = 6 gross clusters of 4 fine clusters with 5 units each"""
    return ClusterStructure.from_sizes([[5] * 4 for _ in range(6)])


@pytest.fixture
def medium_dataset(medium_structure: ClusterStructure) -> Dataset:
    return make_dataset(medium_structure, seed=11)


@pytest.fixture(autouse=True)
def reset_package_logger():
    """Let caplog see package records after a CLI run installed its own handler"""
    logger = logging.getLogger("reclustering")
    yield
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.setLevel(logging.NOTSET)
