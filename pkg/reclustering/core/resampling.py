"""Seeded substreams and block-parallel resampling

Every random draw in the package comes from ``substream(seed, *keys)``. Resampling
loops are cut into fixed-size blocks and block ``b`` always uses the substream keyed by
``b``, so results do not depend on how many workers evaluate the blocks.
"""

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import Literal

import numpy as np
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

type SeedLike = int | np.random.SeedSequence
type Sidedness = Literal["two", "one", "lower"]
type BlockDraw = Callable[[np.random.Generator, int], NDArray[np.float64]]

DEFAULT_BLOCK_SIZE = 250
TIE_RTOL = 1e-12


def seed_sequence(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    """SeedSequence for ``seed`` extended by ``keys``"""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=(*seed.spawn_key, *keys))
    return np.random.SeedSequence(int(seed), spawn_key=tuple(keys))


def substream(seed: SeedLike, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *keys))


def derive_seed(seed: SeedLike, *keys: int) -> int:
    """A plain integer seed for the substream, for reporting and re-running"""
    return int(seed_sequence(seed, *keys).generate_state(1, np.uint64)[0] >> np.uint64(1))


def run_blocks(
    total: int,
    seed: SeedLike,
    draw_block: BlockDraw,
    *,
    keys: tuple[int, ...] = (),
    block_size: int = DEFAULT_BLOCK_SIZE,
    workers: int = 1,
) -> NDArray[np.float64]:
    """Evaluate ``total`` draws in blocks and concatenate them in block order

    ``draw_block(rng, size)`` returns the statistics of ``size`` draws made with ``rng``.
    """
    if total < 1:
        raise ValueError(f"Number of draws must be positive, got {total}")

    sizes = [block_size] * (total // block_size)
    if total % block_size:
        sizes.append(total % block_size)

    def evaluate(block: int) -> NDArray[np.float64]:
        return np.asarray(draw_block(substream(seed, *keys, block), sizes[block]), dtype=float)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            blocks = list(executor.map(evaluate, range(len(sizes))))
    else:
        blocks = [evaluate(block) for block in range(len(sizes))]

    logger.debug(f"Evaluated {total} draws in {len(sizes)} blocks with {workers} worker(s)")
    return np.concatenate(blocks)


def exceedance_p(
    draws: NDArray[np.float64], observed: float, count_observed: bool = False
) -> float:
    """Share of draws strictly above the observed statistic

    Draws equal to the observed value up to rounding are ties; a regrouping that only
    relabels the observed gross clusters must not count as exceeding it. With
    ``count_observed`` the observed statistic joins the reference set and ties count:
    (1 + #{draw >= observed}) / (draws + 1).
    """
    tied = _ties(draws, observed)
    if count_observed:
        at_or_above = np.count_nonzero((draws >= observed) | tied)
        return float((1 + at_or_above) / (draws.shape[0] + 1))
    return float(np.count_nonzero((draws > observed) & ~tied) / draws.shape[0])


def _ties(draws: NDArray[np.float64], observed: float) -> NDArray[np.bool_]:
    return np.isclose(draws, observed, rtol=TIE_RTOL, atol=0.0)


def is_degenerate(draws: NDArray[np.float64], observed: float) -> bool:
    """All draws reproduce the observed statistic"""
    if draws.size == 0:
        return True
    return bool(_ties(draws, observed).all())


def decide(p_value: float, alpha: float, sided: Sidedness = "two") -> bool:
    """Reject from the upper-tail share ``p_value``

    two: p < alpha/2 or p >= 1 - alpha/2. one (upper tail): p < alpha.
    lower (lower tail): p >= 1 - alpha.
    """
    if sided == "two":
        return p_value < alpha / 2 or p_value >= 1 - alpha / 2
    if sided == "lower":
        return p_value >= 1 - alpha
    return p_value < alpha


def sided_label(sided: Sidedness) -> str:
    return "one-sided lower-tail" if sided == "lower" else f"{sided}-sided"
