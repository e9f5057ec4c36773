"""Simulation data generators

Clustered standard-normal series from an AR1 or a hidden-factor model, at fine or
gross level, and the dataset of one simulation iteration:

    x = w x_F + w x_G,  u = w u_F + w u_G,  y = beta x + phi_f + u

with w = 0.5 by default.
"""

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.signal import lfilter

from .cluster_model import ClusterStructure, IntArray
from .regression import Dataset, FloatArray
from .resampling import SeedLike, substream

logger = logging.getLogger(__name__)

type GenerationLevel = Literal["fine", "gross"]
type DGPModel = Literal["ar1", "hidden-factor"]
type MixWeights = Literal["paper", "unit-variance"]

MIX_WEIGHTS: dict[str, float] = {"paper": 0.5, "unit-variance": float(np.sqrt(0.5))}

# Substream keys of the variables drawn in one iteration
X_GROSS, U_GROSS, X_FINE, U_FINE, GROSS_REORDER, FIXED_EFFECTS, FINE_REORDER = range(7)


class DGPParams(BaseModel):
    """Parameters of the clustered data generating process"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    rho_x_gross: float = Field(0.5, ge=0.0, lt=1.0)
    rho_x_fine: float = Field(0.5, ge=0.0, lt=1.0)
    rho_u_gross: float = Field(0.0, ge=0.0, lt=1.0)
    rho_u_fine: float = Field(0.0, ge=0.0, lt=1.0)
    model: DGPModel = "hidden-factor"
    beta: float = 1.0
    mix_weights: MixWeights = "paper"
    fine_reorder: bool = False
    error_scale: float = Field(1.0, ge=0.0)
    fixed_effect_scale: float = Field(1.0, ge=0.0)

    @property
    def mix_weight(self) -> float:
        return MIX_WEIGHTS[self.mix_weights]


def _groups(structure: ClusterStructure, level: GenerationLevel) -> tuple[IntArray, int]:
    if level == "fine":
        return structure.unit_to_fine, structure.n_fine
    return structure.unit_to_gross, structure.n_gross


def gen_ar1(
    structure: ClusterStructure,
    level: GenerationLevel,
    rho: float,
    rng: np.random.Generator,
) -> FloatArray:
    """Stationary AR1 chains with standard-normal marginals

    Fine level restarts the chain in every fine cluster. Gross level runs one chain
    through the gross cluster's fine clusters in order and then reorders the values
    randomly within the gross cluster.
    """
    n = structure.n
    innovations = rng.standard_normal(n)
    # Units of one chain are contiguous in this order: gross, fine, row
    order = np.lexsort((np.arange(n), structure.unit_to_fine, structure.unit_to_gross))
    chain_ids = _groups(structure, level)[0][order]
    starts = np.flatnonzero(np.concatenate(([True], chain_ids[1:] != chain_ids[:-1])))
    stops = np.append(starts[1:], n)

    chained = np.empty(n)
    scale = np.sqrt(1.0 - rho * rho)
    for start, stop in zip(starts, stops, strict=True):
        shocks = scale * innovations[start:stop]
        shocks[0] = innovations[start]
        chained[start:stop] = lfilter([1.0], [1.0, -rho], shocks)

    values = np.empty(n)
    values[order] = chained
    if level == "gross":
        values = values[shuffle_within(structure.unit_to_gross, rng)]
    return values


def gen_hidden_factor(
    structure: ClusterStructure,
    level: GenerationLevel,
    rho: float,
    rng: np.random.Generator,
) -> FloatArray:
    """q_i = rho * factor(cluster, parity of i) + sqrt(1 - rho^2) * e_i

    Parity comes from the unit's position inside its fine cluster, counted from one.
    """
    groups, n_groups = _groups(structure, level)
    factors = rng.standard_normal((n_groups, 2))
    noise = rng.standard_normal(structure.n)
    parity = structure.position_in_fine % 2  # 0 for odd 1-based positions
    return rho * factors[groups, parity] + np.sqrt(1.0 - rho * rho) * noise


GENERATORS = {"ar1": gen_ar1, "hidden-factor": gen_hidden_factor}


def shuffle_within(groups: IntArray, rng: np.random.Generator) -> IntArray:
    """Index array that reorders values randomly inside each group"""
    by_group = np.argsort(groups, kind="stable")
    shuffled = np.lexsort((rng.random(groups.shape[0]), groups))
    permutation = np.empty_like(by_group)
    permutation[by_group] = shuffled
    return permutation


def make_iteration(
    structure: ClusterStructure,
    params: DGPParams,
    seed: SeedLike,
    absorb_fine_fe: bool = True,
) -> Dataset:
    """One simulated dataset; every variable draws from its own substream of ``seed``"""
    generate = GENERATORS[params.model]
    x_gross = generate(structure, "gross", params.rho_x_gross, substream(seed, X_GROSS))
    u_gross = generate(structure, "gross", params.rho_u_gross, substream(seed, U_GROSS))
    x_fine = generate(structure, "fine", params.rho_x_fine, substream(seed, X_FINE))
    u_fine = generate(structure, "fine", params.rho_u_fine, substream(seed, U_FINE))

    joint = shuffle_within(structure.unit_to_gross, substream(seed, GROSS_REORDER))
    x_gross, u_gross = x_gross[joint], u_gross[joint]
    if params.fine_reorder:
        joint = shuffle_within(structure.unit_to_fine, substream(seed, FINE_REORDER))
        x_fine, u_fine = x_fine[joint], u_fine[joint]

    w = params.mix_weight
    x = w * x_fine + w * x_gross
    u = params.error_scale * (w * u_fine + w * u_gross)
    phi = params.fixed_effect_scale * substream(seed, FIXED_EFFECTS).standard_normal(
        structure.n_fine
    )
    y = params.beta * x + phi[structure.unit_to_fine] + u

    return Dataset(
        y=y,
        X=x[:, None],
        structure=structure,
        target=0,
        absorb_fine_fe=absorb_fine_fe,
        column_names=("x",),
    )
